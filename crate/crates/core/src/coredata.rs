//! Tabular data: feature tables with explicit missing cells, CSV I/O and
//! per-column statistics.

use std::fmt::Write as _;
use std::path::Path;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A table cell; `None` is the missing marker (`NA` in CSV).
pub type Cell<T> = Option<T>;

pub const MISSING_TOKEN: &str = "NA";

/// N×K table of numeric cells with unique feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<T> {
    names: Vec<String>,
    rows: Vec<Vec<Cell<T>>>,
}

/// Mean, population standard deviation and missing count of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats<T> {
    pub mean: T,
    pub std_dev: T,
    pub missing: usize,
}

impl<T: Scalar> Table<T> {
    pub fn new(names: Vec<String>, rows: Vec<Vec<Cell<T>>>) -> Result<Self> {
        validate_names(&names)?;
        if rows.is_empty() {
            return Err(Error::Schema("table has no data rows".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::Schema(format!(
                    "row {i} has {} cells, expected {}",
                    row.len(),
                    names.len()
                )));
            }
        }
        Ok(Self { names, rows })
    }

    /// Builds a table from fully observed rows.
    pub fn from_dense(names: Vec<String>, rows: Vec<Vec<T>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(Some).collect())
            .collect();
        Self::new(names, rows)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_features(&self) -> usize {
        self.names.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[Cell<T>] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Cell<T>]> + '_ {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn cell(&self, row: usize, feature: usize) -> Cell<T> {
        self.rows[row][feature]
    }

    pub fn column(&self, feature: usize) -> impl Iterator<Item = Cell<T>> + '_ {
        self.rows.iter().map(move |r| r[feature])
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Rows `indices` in the given order, sharing this table's schema.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices
            .iter()
            .map(|&i| {
                self.rows
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Domain(format!("row {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.names.clone(), rows)
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut records = reader.records();
        let header = match records.next() {
            Some(h) => h?,
            None => return Err(Error::Schema("missing header line".into())),
        };
        let names: Vec<String> = header.iter().map(str::to_owned).collect();
        validate_names(&names)?;

        let mut rows = Vec::new();
        for record in records {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != names.len() {
                return Err(Error::Schema(format!(
                    "line {line}: expected {} cells, found {}",
                    names.len(),
                    record.len()
                )));
            }
            let row = record
                .iter()
                .zip(&names)
                .map(|(raw, name)| parse_cell(raw, line, name))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(names, rows)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    /// Canonical rendering: header, then one line per row, `\n` terminated.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.names.iter().map(|n| quote_field(n)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            for (j, cell) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                push_cell(&mut out, *cell);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

impl<T: Scalar + Float> Table<T> {
    /// Statistics over the non-missing cells of column `feature`.
    pub fn column_stats(&self, feature: usize) -> Result<ColumnStats<T>> {
        if feature >= self.num_features() {
            return Err(Error::Domain(format!(
                "feature index {feature} out of range for {} features",
                self.num_features()
            )));
        }
        let present: Vec<T> = self.column(feature).flatten().collect();
        let missing = self.num_rows() - present.len();
        if present.is_empty() {
            return Err(Error::EmptyColumn(feature));
        }
        let (mean, std_dev) = mean_and_std(&present);
        Ok(ColumnStats {
            mean,
            std_dev,
            missing,
        })
    }
}

/// Mean and population standard deviation. Two passes; `values` non-empty.
pub(crate) fn mean_and_std<T: Scalar + Float>(values: &[T]) -> (T, T) {
    let n = T::from_count(values.len());
    let mean = values.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    let var = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean))
        / n;
    (mean, var.sqrt())
}

pub(crate) fn push_cell<T: Scalar>(out: &mut String, cell: Cell<T>) {
    match cell {
        Some(v) => {
            let _ = write!(out, "{v}");
        }
        None => out.push_str(MISSING_TOKEN),
    }
}

pub(crate) fn quote_field(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_owned()
    }
}

fn parse_cell<T: Scalar>(raw: &str, line: u64, column: &str) -> Result<Cell<T>> {
    if raw == MISSING_TOKEN {
        return Ok(None);
    }
    let err = |message: String| Error::Parse {
        line,
        column: column.to_owned(),
        message,
    };
    let value = raw
        .parse::<T>()
        .map_err(|_| err(format!("cannot parse {raw:?} as a number")))?;
    // NaN is not a value; `NA` is the only missing marker.
    if value.partial_cmp(&value).is_none() {
        return Err(err(format!("{raw:?} is not a number")));
    }
    Ok(Some(value))
}

pub(crate) fn validate_names(names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::Schema("table has no columns".into()));
    }
    for (i, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::Schema(format!("column {i} has an empty name")));
        }
        if names[..i].contains(name) {
            return Err(Error::Schema(format!("duplicate column name {name:?}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(text: &str) -> Result<Table<f64>> {
        Table::parse_csv(text)
    }

    #[test]
    fn parses_missing_token() {
        let t = table("x,y\n1.5,NA\n").unwrap();
        assert_eq!(t.num_features(), 2);
        assert_eq!(t.num_rows(), 1);
        assert_eq!(t.cell(0, 0), Some(1.5));
        assert_eq!(t.cell(0, 1), None);
    }

    #[test]
    fn rejects_duplicate_names() {
        assert!(matches!(table("x,x\n1,2\n"), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_empty_input() {
        assert!(matches!(table(""), Err(Error::Schema(_))));
        assert!(matches!(table("x,y\n"), Err(Error::Schema(_))));
    }

    #[test]
    fn ragged_row_names_its_line() {
        let err = table("x,y\n1,2\n3\n").unwrap_err();
        match err {
            Error::Schema(msg) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_cell_names_line_and_column() {
        let err = table("x,y\n1,2\n3,abc\n").unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stats_constant_column() {
        let t = table("a\n1\n1\n1\n").unwrap();
        let s = t.column_stats(0).unwrap();
        assert_eq!((s.mean, s.std_dev, s.missing), (1.0, 0.0, 0));
    }

    #[test]
    fn stats_symmetric_pair() {
        let t = table("a\n-1\n1\n").unwrap();
        let s = t.column_stats(0).unwrap();
        assert_eq!((s.mean, s.std_dev, s.missing), (0.0, 1.0, 0));
    }

    #[test]
    fn stats_skip_missing() {
        // mean of {2, 4} = 3, population std = 1, one missing
        let t = table("a\n2\nNA\n4\n").unwrap();
        let s = t.column_stats(0).unwrap();
        assert_eq!((s.mean, s.std_dev, s.missing), (3.0, 1.0, 1));
    }

    #[test]
    fn stats_all_missing_is_an_error() {
        let t = table("a,b\nNA,1\nNA,2\n").unwrap();
        assert!(matches!(t.column_stats(0), Err(Error::EmptyColumn(0))));
        assert!(matches!(t.column_stats(5), Err(Error::Domain(_))));
    }

    fn cell_strategy() -> impl Strategy<Value = Cell<f64>> {
        prop_oneof![
            1 => Just(None),
            4 => (-1e6f64..1e6).prop_map(Some),
            1 => (-100i32..100).prop_map(|v| Some(f64::from(v))),
        ]
    }

    proptest! {
        #[test]
        fn csv_write_read_write_is_identity(
            rows in prop::collection::vec(prop::collection::vec(cell_strategy(), 3), 1..20)
        ) {
            let t = Table::new(vec!["a".into(), "b".into(), "c".into()], rows).unwrap();
            let text = t.to_csv_string();
            let back: Table<f64> = Table::parse_csv(&text).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(back.to_csv_string(), text);
        }

        #[test]
        fn stats_ignore_row_order(
            mut values in prop::collection::vec(-1e3f64..1e3, 1..30),
            seed in any::<u64>(),
        ) {
            let names = vec!["v".to_string()];
            let a = Table::from_dense(names.clone(), values.iter().map(|&v| vec![v]).collect()).unwrap();
            crate::rng::SeededRng::new(seed).shuffle(&mut values);
            let b = Table::from_dense(names, values.iter().map(|&v| vec![v]).collect()).unwrap();
            let (sa, sb) = (a.column_stats(0).unwrap(), b.column_stats(0).unwrap());
            prop_assert!((sa.mean - sb.mean).abs() < 1e-9);
            prop_assert!((sa.std_dev - sb.std_dev).abs() < 1e-9);
        }
    }
}
