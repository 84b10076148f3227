//! CSV readers and writers for point clouds, index sets, edge lists and
//! solutions. Every float is written with [`g17`].

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::PointCloud;
use crate::graph::Adjacency;
use crate::numfmt::g17;
use crate::solver::SolverState;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl IoError {
    pub(crate) fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

pub(crate) fn create(path: &Path) -> Result<io::BufWriter<File>, IoError> {
    File::create(path).map(io::BufWriter::new).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| IoError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

pub(crate) fn wrap_io(path: &Path) -> impl Fn(io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn wrap_csv(path: &Path) -> impl Fn(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Header `x0,...,x{m-1}`, one row per point.
pub fn write_points(path: &Path, points: &PointCloud) -> Result<(), IoError> {
    let mut out = create(path)?;
    write_points_to(&mut out, points).map_err(wrap_io(path))
}

pub fn write_points_to(out: &mut impl Write, points: &PointCloud) -> io::Result<()> {
    let header: Vec<String> = (0..points.dim()).map(|d| format!("x{d}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in points.iter() {
        let row: Vec<String> = p.iter().map(|&x| g17(x)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()
}

/// Reads a point CSV; the dimension is the number of `x*` columns.
pub fn read_points(path: &Path) -> Result<PointCloud, IoError> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers().map_err(wrap_csv(path))?.clone();
    let cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('x') && h[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(IoError::format(path, "no x0.. columns"));
    }
    let m = cols.len();
    let mut coords = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(wrap_csv(path))?;
        for &c in &cols {
            let field = rec.get(c).unwrap_or("");
            coords.push(
                field
                    .parse::<f64>()
                    .map_err(|e| IoError::format(path, format!("bad number {field:?}: {e}")))?,
            );
        }
    }
    PointCloud::new(m, coords).map_err(|e| IoError::format(path, e.to_string()))
}

/// Header `index`, one vertex index per row.
pub fn write_indices(path: &Path, idx: &[usize]) -> Result<(), IoError> {
    let mut out = create(path)?;
    (|| -> io::Result<()> {
        writeln!(out, "index")?;
        for i in idx {
            writeln!(out, "{i}")?;
        }
        out.flush()
    })()
    .map_err(wrap_io(path))
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>, IoError> {
    let mut rdr = csv_reader(path)?;
    let mut idx = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(wrap_csv(path))?;
        let field = rec.get(0).unwrap_or("");
        idx.push(
            field
                .parse::<usize>()
                .map_err(|e| IoError::format(path, format!("bad index {field:?}: {e}")))?,
        );
    }
    Ok(idx)
}

/// Header `i,j,weight`, one row per stored ordered pair.
pub fn write_edges(path: &Path, adjacency: &Adjacency) -> Result<(), IoError> {
    let mut out = create(path)?;
    (|| -> io::Result<()> {
        writeln!(out, "i,j,weight")?;
        for (i, j, w) in adjacency.entries() {
            writeln!(out, "{i},{j},{}", g17(w))?;
        }
        out.flush()
    })()
    .map_err(wrap_io(path))
}

/// Header `index,x0..,f_<t>..` with one value column per snapshot.
pub fn write_solution(path: &Path, points: &PointCloud, states: &[SolverState]) -> Result<(), IoError> {
    let mut out = create(path)?;
    write_solution_to(&mut out, points, states).map_err(wrap_io(path))
}

pub fn write_solution_to(out: &mut impl Write, points: &PointCloud, states: &[SolverState]) -> io::Result<()> {
    let mut header = vec!["index".to_string()];
    header.extend((0..points.dim()).map(|d| format!("x{d}")));
    header.extend(states.iter().map(|s| format!("f_{}", g17(s.t))));
    writeln!(out, "{}", header.join(","))?;
    for (u, p) in points.iter().enumerate() {
        let mut row = vec![u.to_string()];
        row.extend(p.iter().map(|&x| g17(x)));
        row.extend(states.iter().map(|s| g17(s.values[u])));
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelProfile;

    #[test]
    fn points_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let pts = PointCloud::new(2, vec![0.1, 1.0 / 3.0, 5e-324, 0.999_999_999_999_999_9]).unwrap();
        write_points(&path, &pts).unwrap();
        let back = read_points(&path).unwrap();
        assert_eq!(back.coords().len(), 4);
        for (a, b) in pts.coords().iter().zip(back.coords()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x0,x1\n0.10000000000000001,"));
    }

    #[test]
    fn indices_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        write_indices(&path, &[0, 5, 17]).unwrap();
        assert_eq!(read_indices(&path).unwrap(), vec![0, 5, 17]);
    }

    #[test]
    fn edges_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let v = PointCloud::new(1, vec![0.0, 0.5, 1.0]).unwrap();
        let adj = crate::graph::build_adjacency(&v, 1.0, &KernelProfile::triangle()).unwrap();
        write_edges(&path, &adj).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "i,j,weight\n0,1,2\n0,2,0\n1,0,2\n1,2,2\n2,0,0\n2,1,2\n");
    }
}
