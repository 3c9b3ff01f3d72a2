//! Delimited-text ingestion and export of expression matrices.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Tsv,
}

impl TableFormat {
    pub fn delimiter(self) -> u8 {
        match self {
            TableFormat::Csv => b',',
            TableFormat::Tsv => b'\t',
        }
    }

    /// Guess from a file extension; anything but `.tsv`/`.txt` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") | Some("txt") => TableFormat::Tsv,
            _ => TableFormat::Csv,
        }
    }
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(TableFormat::Csv),
            "tsv" => Ok(TableFormat::Tsv),
            other => Err(Error::Config(format!("unknown table format {other:?}"))),
        }
    }
}

/// Load a features × samples table. Row numbers in errors are 1-based file
/// records (the header, when present, is record 1).
pub fn load_matrix(path: &Path, format: TableFormat, has_header: bool) -> Result<ExpressionMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(BufReader::new(file), format, has_header)
}

pub fn read_matrix<R: Read>(reader: R, format: TableFormat, has_header: bool) -> Result<ExpressionMatrix> {
    read_table(reader, format, has_header, false).map(|t| t.matrix)
}

/// A matrix plus the feature names from its first column, when present.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub matrix: ExpressionMatrix,
    pub row_names: Option<Vec<String>>,
}

impl Table {
    /// Keep only the given rows, names included.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Table> {
        Ok(Table {
            matrix: self.matrix.select_rows(rows)?,
            row_names: self
                .row_names
                .as_ref()
                .map(|names| rows.iter().map(|&i| names[i].clone()).collect()),
        })
    }
}

pub fn load_table(path: &Path, format: TableFormat, has_header: bool, row_names: bool) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(BufReader::new(file), format, has_header, row_names)
}

/// Like [`read_matrix`]; with `row_names` the first column holds feature
/// names and its header cell (if any) is dropped.
pub fn read_table<R: Read>(reader: R, format: TableFormat, has_header: bool, row_names: bool) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut sample_ids: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut header: Option<Vec<String>> = None;
    let mut header_seen = false;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    let skip = usize::from(row_names);

    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if has_header && !header_seen {
            header = Some(record.iter().map(str::to_owned).collect());
            header_seen = true;
            continue;
        }
        if width.is_none() {
            if let Some(h) = header.take() {
                // R-style tables omit the header cell above the row names
                let ids = if row_names && h.len() + 1 == record.len() {
                    h
                } else {
                    if h.len() != record.len() {
                        return Err(Error::RaggedRow {
                            row,
                            expected: h.len(),
                            found: record.len(),
                        });
                    }
                    h.into_iter().skip(skip).collect()
                };
                sample_ids = Some(ids);
            }
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: record.len(),
            });
        }
        if expected <= skip {
            return Err(Error::Dimension("no sample columns after the row names".into()));
        }
        if columns.is_empty() {
            columns = vec![Vec::new(); expected - skip];
        }
        if row_names {
            names.push(record[0].to_owned());
        }
        for (j, cell) in record.iter().enumerate().skip(skip) {
            let value: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                column: j + 1,
                cell: cell.to_owned(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumeric {
                    row,
                    column: j + 1,
                    cell: cell.to_owned(),
                });
            }
            columns[j - skip].push(value);
        }
    }

    if columns.is_empty() {
        return Err(Error::Dimension("table has no data rows".into()));
    }
    if columns.len() < 2 {
        return Err(Error::Dimension(format!(
            "at least 2 sample columns are required, found {}",
            columns.len()
        )));
    }
    Ok(Table {
        matrix: ExpressionMatrix::from_columns(columns, sample_ids)?,
        row_names: row_names.then_some(names),
    })
}

/// Write a matrix in the ingestion schema (header of sample ids, one feature
/// per row).
pub fn write_matrix<W: Write>(writer: W, m: &ExpressionMatrix, format: TableFormat) -> Result<()> {
    write_table(writer, m, None, format)
}

/// Write a matrix, with a leading `feature` column when names are given.
pub fn write_table<W: Write>(
    writer: W,
    m: &ExpressionMatrix,
    row_names: Option<&[String]>,
    format: TableFormat,
) -> Result<()> {
    if let Some(names) = row_names {
        if names.len() != m.n_rows() {
            return Err(Error::Dimension(format!(
                "{} row names for {} rows",
                names.len(),
                m.n_rows()
            )));
        }
    }
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(format.delimiter())
        .from_writer(writer);
    let mut record = Vec::with_capacity(m.n_cols() + 1);
    if row_names.is_some() {
        record.push("feature".to_owned());
    }
    record.extend(m.sample_ids().iter().cloned());
    wtr.write_record(&record)?;
    for i in 0..m.n_rows() {
        record.clear();
        if let Some(names) = row_names {
            record.push(names[i].clone());
        }
        record.extend((0..m.n_cols()).map(|j| format_value(m.get(i, j))));
        wtr.write_record(&record)?;
    }
    wtr.flush().map_err(|e| Error::io("<matrix writer>", e))?;
    Ok(())
}

pub fn save_matrix(path: &Path, m: &ExpressionMatrix, format: TableFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(std::io::BufWriter::new(file), m, format)
}

/// One-column CSV with a `value` header.
pub fn write_vector<W: Write>(writer: W, header: &str, values: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([header])?;
    for &v in values {
        wtr.write_record([format_value(v)])?;
    }
    wtr.flush().map_err(|e| Error::io("<vector writer>", e))?;
    Ok(())
}

/// Class labels, one small integer per line (blank lines ignored) or
/// separated by commas/whitespace.
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<u32>> {
    let mut labels = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io("<labels>", e))?;
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()) {
            if tok.is_empty() {
                continue;
            }
            let label = tok.parse().map_err(|_| Error::Parse {
                row: idx + 1,
                message: format!("class label {tok:?} is not a positive integer"),
            })?;
            labels.push(label);
        }
    }
    Ok(labels)
}

pub fn load_labels(path: &Path) -> Result<Vec<u32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(file)
}

/// Shortest representation that round-trips through `f64::from_str`.
pub fn format_value(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_plain_csv() {
        let m = read_matrix("1,2\n3,4\n5,6".as_bytes(), TableFormat::Csv, false).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (3, 2));
        assert_eq!(m.column(0), &[1.0, 3.0, 5.0]);
        assert_eq!(m.sample_ids(), &["1", "2"]);
        assert!(!m.is_sorted());
    }

    #[test]
    fn reads_header() {
        let m = read_matrix("s1,s2\n1,2\n3,4".as_bytes(), TableFormat::Csv, true).unwrap();
        assert_eq!(m.sample_ids(), &["s1", "s2"]);
        assert_eq!(m.n_rows(), 2);
    }

    #[test]
    fn reads_tsv() {
        let m = read_matrix("a\tb\n1\t2\n".as_bytes(), TableFormat::Tsv, true).unwrap();
        assert_eq!(m.row(0), vec![1.0, 2.0]);
    }

    #[test]
    fn ragged_row_reported() {
        let err = read_matrix("1,2,3\n4,5".as_bytes(), TableFormat::Csv, false).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 2, expected: 3, found: 2 }));
    }

    #[test]
    fn non_numeric_and_missing_cells() {
        let err = read_matrix("1,2\n3,x".as_bytes(), TableFormat::Csv, false).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 2, column: 2, .. }));
        let err = read_matrix("1,2\n,4".as_bytes(), TableFormat::Csv, false).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 2, column: 1, .. }));
        let err = read_matrix("1,NaN\n3,4".as_bytes(), TableFormat::Csv, false).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { .. }));
    }

    #[test]
    fn single_column_rejected() {
        let err = read_matrix("1\n2\n3".as_bytes(), TableFormat::Csv, false).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn write_then_read() {
        let m = read_matrix("a,b\n0.1,2e-9\n3,4".as_bytes(), TableFormat::Csv, true).unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m, TableFormat::Csv).unwrap();
        let back = read_matrix(buf.as_slice(), TableFormat::Csv, true).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn row_names_with_and_without_corner_cell() {
        let t = read_table("gene,s1,s2\ng1,1,2\ng2,3,4".as_bytes(), TableFormat::Csv, true, true).unwrap();
        assert_eq!(t.matrix.sample_ids(), &["s1", "s2"]);
        assert_eq!(t.row_names.as_deref().unwrap(), &["g1", "g2"]);
        assert_eq!(t.matrix.column(1), &[2.0, 4.0]);
        let r = read_table("s1\ts2\ng1\t1\t2\ng2\t3\t4".as_bytes(), TableFormat::Tsv, true, true).unwrap();
        assert_eq!(r, t);

        let mut buf = Vec::new();
        write_table(&mut buf, &t.matrix, t.row_names.as_deref(), TableFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "feature,s1,s2\ng1,1,2\ng2,3,4\n");

        let kept = t.select_rows(&[1]).unwrap();
        assert_eq!(kept.row_names.unwrap(), vec!["g2".to_owned()]);
        assert_eq!(kept.matrix.row(0), vec![3.0, 4.0]);
    }

    #[test]
    fn labels_lines_or_commas() {
        assert_eq!(read_labels("1\n1\n\n2\n2\n".as_bytes()).unwrap(), vec![1, 1, 2, 2]);
        assert_eq!(read_labels("1,2, 2 1".as_bytes()).unwrap(), vec![1, 2, 2, 1]);
        assert!(read_labels("a".as_bytes()).is_err());
    }
}
