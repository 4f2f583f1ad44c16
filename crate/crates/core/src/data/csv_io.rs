use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Reads a headed, delimited numeric table. Every column except `target`
/// becomes a feature, in file order. Rows containing an empty cell are
/// rejected as a group with their count.
pub fn load_csv(path: &Path, target: &str, delimiter: u8) -> Result<Dataset<f64>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::InvalidInput(format!("target column '{target}' not found in {}", path.display())))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(Error::InvalidInput("no feature columns besides the target".into()));
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut missing = 0usize;
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        // data rows are numbered from 1, the header excluded
        let row = k + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: "*".into(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        if record.iter().any(str::is_empty) {
            missing += 1;
            continue;
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[j].clone(),
                message: format!("'{cell}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[j].clone(),
                    message: format!("'{cell}' is not finite"),
                });
            }
            if j == target_idx {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    if missing > 0 {
        return Err(Error::InvalidInput(format!(
            "{missing} row(s) with missing values in {}",
            path.display()
        )));
    }
    if ys.is_empty() {
        return Err(Error::InvalidInput(format!("{} has no data rows", path.display())));
    }
    let x = Matrix::new(ys.len(), feature_names.len(), xs)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut ds = Dataset::new(x, ys, name)?;
    ds.feature_names = Some(feature_names);
    Ok(ds)
}

/// Writes features then the response column `target`, comma separated.
pub fn write_csv(path: &Path, data: &Dataset<f64>, target: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::io::BufWriter::new(File::create(path).map_err(io)?);
    let names: Vec<String> = match &data.feature_names {
        Some(n) => n.clone(),
        None => (0..data.p()).map(|j| format!("x{j}")).collect(),
    };
    writeln!(f, "{},{target}", names.join(",")).map_err(io)?;
    for i in 0..data.n() {
        let row: Vec<String> = data.x.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(f, "{},{:?}", row.join(","), data.y[i]).map_err(io)?;
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file_with(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn toy_file() {
        let f = file_with("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv(f.path(), "y", b',').unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.y, vec![3.0, 6.0, 9.0]);
        assert_eq!(d.x.row(1), &[4.0, 5.0]);
        assert_eq!(d.feature_names.unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn target_in_the_middle() {
        let f = file_with("a,y,b\n1,2,3\n4,5,6\n");
        let d = load_csv(f.path(), "y", b',').unwrap();
        assert_eq!(d.y, vec![2.0, 5.0]);
        assert_eq!(d.x.row(0), &[1.0, 3.0]);
    }

    #[test]
    fn non_numeric_cell_is_located() {
        let f = file_with("a,b,y\n1,2,3\n1,2,3\n1,2,3\n1,2,3\n1,oops,3\n");
        match load_csv(f.path(), "y", b',') {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (5, "b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semicolon_matches_comma() {
        let a = file_with("a,b,y\n1.5,2,3\n4,-5e-1,6\n");
        let b = file_with("a;b;y\n1.5;2;3\n4;-5e-1;6\n");
        let da = load_csv(a.path(), "y", b',').unwrap();
        let db = load_csv(b.path(), "y", b';').unwrap();
        assert_eq!(da.x, db.x);
        assert_eq!(da.y, db.y);
    }

    #[test]
    fn errors() {
        let missing = Path::new("/definitely/not/here.csv");
        match load_csv(missing, "y", b',') {
            Err(e @ Error::Io { .. }) => assert!(e.to_string().contains("/definitely/not/here.csv")),
            other => panic!("unexpected {other:?}"),
        }
        let f = file_with("a,b\n1,2\n");
        assert!(matches!(load_csv(f.path(), "y", b','), Err(Error::InvalidInput(_))));
        let f = file_with("a,y\n1,2\n,3\n4,\n5,6\n");
        match load_csv(f.path(), "y", b',') {
            Err(Error::InvalidInput(msg)) => assert!(msg.starts_with("2 row"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_then_load() {
        let x = Matrix::new(2, 2, vec![0.1, 1.0 / 3.0, -2.0, 1e-300]).unwrap();
        let d = Dataset::new(x, vec![5.0, -0.25], "w").unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(f.path(), &d, "target").unwrap();
        let back = load_csv(f.path(), "target", b',').unwrap();
        assert_eq!(back.x, d.x);
        assert_eq!(back.y, d.y);
    }
}
