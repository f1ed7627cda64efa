//! File formats: binary cubes, endmember CSV and single-column value lists.
//!
//! A cube file is the magic line `HCUBE1`, an ASCII header `N1 N2 N3 f64` and
//! `N1·N2·N3` little-endian `f64` values with mode-3 fibers contiguous, then
//! the column index, then the row index.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use ultra_core::{EndmemberMatrix, Matrix, Tensor3};

use crate::error::CliError;

const MAGIC: &[u8] = b"HCUBE1\n";

pub fn write_cube(path: &Path, t: &Tensor3) -> Result<(), CliError> {
    let (n1, n2, n3) = t.dims();
    let mut bytes = Vec::with_capacity(MAGIC.len() + 32 + 8 * t.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(format!("{n1} {n2} {n3} f64\n").as_bytes());
    for v in t.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_cube(path: &Path) -> Result<Tensor3, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| CliError::format(path, "not a cube file (bad magic)"))?;
    let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| CliError::format(path, "missing cube header"))?;
    let header = std::str::from_utf8(&rest[..end]).map_err(|_| CliError::format(path, "cube header is not ASCII"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let dims = match fields.as_slice() {
        [a, b, c, "f64"] => (parse_dim(path, a)?, parse_dim(path, b)?, parse_dim(path, c)?),
        _ => return Err(CliError::format(path, format!("bad cube header '{header}'"))),
    };
    let payload = &rest[end + 1..];
    let expected = dims.0.checked_mul(dims.1).and_then(|n| n.checked_mul(dims.2)).and_then(|n| n.checked_mul(8));
    if expected != Some(payload.len()) {
        return Err(CliError::format(
            path,
            format!("payload is {} bytes, header {}x{}x{} needs {:?}", payload.len(), dims.0, dims.1, dims.2, expected),
        ));
    }
    let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Tensor3::from_vec(dims, data).map_err(|e| CliError::format(path, e.to_string()))
}

fn parse_dim(path: &Path, s: &str) -> Result<usize, CliError> {
    s.parse().map_err(|_| CliError::format(path, format!("bad dimension '{s}' in cube header")))
}

/// Writes one row per band with a header naming the endmembers.
pub fn write_endmembers(path: &Path, m: &EndmemberMatrix) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let header: Vec<String> = (1..=m.count()).map(|r| format!("endmember_{r}")).collect();
    let to_err = |e: csv::Error| CliError::format(path, e.to_string());
    w.write_record(&header).map_err(to_err)?;
    for b in 0..m.bands() {
        w.write_record(m.matrix().row(b).iter().map(|v| v.to_string())).map_err(to_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads an `L × R` endmember matrix; a first row that does not parse as
/// numbers is treated as a header.
pub fn read_endmembers(path: &Path) -> Result<EndmemberMatrix, CliError> {
    let rows = read_numeric_rows(path)?;
    let r = rows.first().map(Vec::len).ok_or_else(|| CliError::format(path, "no endmember rows"))?;
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != r) {
        return Err(CliError::format(path, format!("row {} has {} values, expected {r}", i + 1, row.len())));
    }
    let l = rows.len();
    let m = Matrix::from_row_major(l, r, rows.into_iter().flatten().collect())
        .map_err(|e| CliError::format(path, e.to_string()))?;
    EndmemberMatrix::new(m).map_err(|e| CliError::format(path, e.to_string()))
}

/// First column of a CSV of values, one per row, with an optional header.
pub fn read_values(path: &Path) -> Result<Vec<f64>, CliError> {
    Ok(read_numeric_rows(path)?.into_iter().filter_map(|row| row.first().copied()).collect())
}

fn read_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => CliError::format(path, format!("{other:?}")),
        })?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::format(path, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) if values.iter().all(|v| v.is_finite()) => rows.push(values),
            Ok(_) => return Err(CliError::format(path, format!("row {} has non-finite values", i + 1))),
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::format(path, format!("row {}: {e}", i + 1))),
        }
    }
    Ok(rows)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::format(path, e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.hcube");
        let t = Tensor3::from_fn((3, 2, 4), |i, j, k| (i as f64 + 0.1).powi(j as i32) / (k as f64 + 3.0) - 1e-300);
        write_cube(&path, &t).unwrap();
        let back = read_cube(&path).unwrap();
        assert!(t.as_slice().iter().zip(back.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.dims(), (3, 2, 4));
    }

    #[test]
    fn cube_layout_is_fiber_major() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.hcube");
        let t = Tensor3::from_fn((2, 2, 2), |i, j, k| (100 * i + 10 * j + k) as f64);
        write_cube(&path, &t).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"HCUBE1\n2 2 2 f64\n"));
        let payload = &bytes[MAGIC.len() + "2 2 2 f64\n".len()..];
        let values: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        assert_eq!(values, [0.0, 1.0, 10.0, 11.0, 100.0, 101.0, 110.0, 111.0]);
    }

    #[test]
    fn truncated_cube_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.hcube");
        fs::write(&path, b"HCUBE1\n1 1 2 f64\n\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_cube(&path), Err(CliError::Format { .. })));
        fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(read_cube(&path), Err(CliError::Format { .. })));
    }

    #[test]
    fn endmember_csv_round_trip_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = EndmemberMatrix::new(Matrix::from_fn(5, 2, |i, j| 0.1 * i as f64 + 1.0 / (j as f64 + 3.0))).unwrap();
        write_endmembers(&path, &m).unwrap();
        assert_eq!(read_endmembers(&path).unwrap(), m);

        fs::write(&path, "0.5,0.25\n0.125,1\n").unwrap();
        let m = read_endmembers(&path).unwrap();
        assert_eq!((m.bands(), m.count()), (2, 2));
        assert_eq!(m.matrix().get(1, 0), 0.125);
    }

    #[test]
    fn ragged_or_bad_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        fs::write(&path, "a,b\n0.5,0.25\n0.125\n").unwrap();
        assert!(read_endmembers(&path).is_err());
        fs::write(&path, "0.5,0.25\nx,1\n").unwrap();
        assert!(read_endmembers(&path).is_err());
        fs::write(&path, "sre\n1.5\n2.5\n").unwrap();
        assert_eq!(read_values(&path).unwrap(), [1.5, 2.5]);
    }
}
