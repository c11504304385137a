use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::ResultRow;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "algorithm,sweep_param,sweep_value,p_miss,p_miss_ci,p_fa,p_fa_ci,\
eib_err,eib_err_ci,tau_sq_final,trials,diverged,threshold_scale,label";

/// Appends result rows to a CSV file, one flushed line per row, so an
/// interrupted run leaves a parseable file.
pub struct CsvSink {
    path: PathBuf,
    file: File,
}

impl CsvSink {
    /// Opens `path`, writing the header if the file is new or empty. With
    /// `truncate`, any existing content is discarded first.
    pub fn open(path: &Path, truncate: bool) -> Result<Self> {
        let existing = if truncate { 0 } else { std::fs::metadata(path).map(|m| m.len()).unwrap_or(0) };
        if existing > 0 {
            let first = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
                .lines()
                .next()
                .transpose()
                .map_err(|e| Error::io(path, e))?;
            if first.as_deref() != Some(CSV_HEADER) {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::InvalidData, "existing file has a different header"),
                ));
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(!truncate)
            .write(true)
            .truncate(truncate)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if existing == 0 {
            writeln!(file, "{CSV_HEADER}").map_err(|e| Error::io(path, e))?;
        }
        Ok(CsvSink { path: path.to_path_buf(), file })
    }

    pub fn write(&mut self, row: &ResultRow) -> Result<()> {
        let line = format_row(row).map_err(|e| Error::csv(&self.path, e))?;
        self.file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// One CSV line (with trailing newline) in the [`CSV_HEADER`] layout.
pub fn format_row(row: &ResultRow) -> std::result::Result<String, csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.serialize(row)?;
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `rows` to a fresh file at `path`.
pub fn persist(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut sink = CsvSink::open(path, true)?;
    rows.iter().try_for_each(|r| sink.write(r))
}

/// Parses a result CSV.
pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    reader.deserialize().map(|r| r.map_err(|e| Error::csv(path, e))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::Algorithm;

    fn row(alg: Algorithm, v: usize) -> ResultRow {
        ResultRow {
            algorithm: alg,
            sweep_param: "n_antennas".into(),
            sweep_value: v,
            p_miss: 0.012_345_678_901_234_5,
            p_miss_ci: 1e-3,
            p_fa: 0.1,
            p_fa_ci: 2.5e-4,
            eib_err: alg.uses_eib().then_some(0.3),
            eib_err_ci: alg.uses_eib().then_some(0.01),
            tau_sq_final: 1.234_567e-12,
            trials: 100,
            diverged: 1,
            threshold_scale: 0.87,
            label: "fig5a".into(),
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        persist(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{CSV_HEADER}\n"));
        assert!(read_rows(&path).unwrap().is_empty());
    }

    #[test]
    fn rows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let rows = vec![row(Algorithm::AmpNoEib, 1), row(Algorithm::MampEib, 4)];
        persist(&rows, &path).unwrap();
        assert_eq!(read_rows(&path).unwrap(), rows);
    }

    #[test]
    fn append_keeps_single_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        CsvSink::open(&path, false).unwrap().write(&row(Algorithm::AmpEib, 1)).unwrap();
        CsvSink::open(&path, false).unwrap().write(&row(Algorithm::AmpEib, 2)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("algorithm,").count(), 1);
        assert_eq!(read_rows(&path).unwrap().len(), 2);
    }

    #[test]
    fn foreign_file_is_not_appended_to() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(CsvSink::open(&path, false).is_err());
        assert!(CsvSink::open(&path, true).is_ok());
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let err = persist(&[], Path::new("/nonexistent/dir/out.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/dir/out.csv"));
    }
}
