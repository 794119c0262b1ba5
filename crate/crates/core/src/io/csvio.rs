use std::fs::File;
use std::path::Path;

use super::{Dataset, IoError};

/// Reads a two-column `t,u` file. A first row that does not parse as
/// numbers is taken as a header.
pub fn load_csv(path: &Path) -> Result<Dataset, IoError> {
    let file = File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let (mut t, mut u) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IoError::Format { row, column: 1, message: e.to_string() })?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != 2 {
            return Err(IoError::Format {
                row,
                column: record.len().min(2) + 1,
                message: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let parsed: Vec<Result<f64, _>> = record.iter().map(|s| s.parse::<f64>()).collect();
        if row == 1 && parsed.iter().all(|p| p.is_err()) {
            continue;
        }
        let mut vals = [0.0; 2];
        for (j, p) in parsed.into_iter().enumerate() {
            vals[j] = p.map_err(|_| IoError::Format {
                row,
                column: j + 1,
                message: format!("`{}` is not a number", &record[j]),
            })?;
        }
        t.push(vals[0]);
        u.push(vals[1]);
    }
    Ok(Dataset::new(t, u)?)
}

/// Writes `t,u` with a header, reals in shortest round-trip form.
pub fn write_csv(data: &Dataset, path: &Path) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(["t", "u"]).map_err(csv_io)?;
    for (t, u) in data.t.iter().zip(&data.u) {
        w.write_record([format!("{t:?}"), format!("{u:?}")]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> IoError {
    IoError::Io(std::io::Error::other(e))
}
