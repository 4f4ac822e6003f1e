//! CSV tables and `key=value` summaries.
//!
//! Floats are written in shortest round-trip form (`{:?}`), so a value
//! read back parses to the same bits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Numeric table with a fixed header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of the named column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v:?}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
        let mut table = Table::new(header.split(','));
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("CSV line {}: {e}", i + 2)))?;
            if row.len() != table.columns.len() {
                return Err(Error::InvalidArgument(format!("CSV line {}: wrong field count", i + 2)));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())
            .map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
    }
}

/// Ordered `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new() -> Self {
        Summary::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            writeln!(out, "{k}={v}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Summary::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("summary line {}: missing `=`", i + 1)))?;
            s.entries.push((k.to_string(), v.to_string()));
        }
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())
            .map_err(|e| Error::from(e).context(format!("writing {}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn csv_round_trips_bits(rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 3), 0..20)) {
            let mut t = Table::new(["a", "b", "c"]);
            for r in rows {
                t.push(r);
            }
            let back = Table::from_csv(&t.to_csv()).unwrap();
            prop_assert_eq!(back.rows.len(), t.rows.len());
            for (x, y) in back.rows.iter().flatten().zip(t.rows.iter().flatten()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }

        #[test]
        fn summary_round_trips(pairs in prop::collection::vec(("[a-z_.]{1,12}", "[ -~]{0,20}"), 0..10)) {
            let mut s = Summary::new();
            for (k, v) in &pairs {
                s.set(k.clone(), v);
            }
            prop_assert_eq!(Summary::parse(&s.render()).unwrap(), s);
        }
    }

    #[test]
    fn column_lookup() {
        let mut t = Table::new(["t", "x"]);
        t.push(vec![0.0, 1.5]);
        t.push(vec![0.1, -2.0]);
        assert_eq!(t.column("x"), Some(vec![1.5, -2.0]));
        assert_eq!(t.column("y"), None);
        assert!(Table::from_csv("a,b\n1\n").is_err());
    }
}
