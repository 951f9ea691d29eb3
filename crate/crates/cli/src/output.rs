//! CSV tables and the JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::checks::CheckResult;

/// A numeric table; `None` cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_values(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| Some(*v)).collect());
    }

    /// Comma separated, LF endings, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.map(format_number).unwrap_or_default()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_tables(dir: &Path, tables: &[Table]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for t in tables {
        let mut f = fs::File::create(dir.join(format!("{}.csv", t.name)))?;
        f.write_all(t.to_csv().as_bytes())?;
    }
    Ok(())
}

pub fn summary_json(results: &BTreeMap<String, CheckResult>) -> String {
    // serde_json writes non-finite floats as null
    serde_json::to_string_pretty(results).expect("check results serialise") + "\n"
}

pub fn write_summary(dir: &Path, results: &BTreeMap<String, CheckResult>) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.json"), summary_json(results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks::{Rule, Verdict};

    #[test]
    fn csv_has_seventeen_digits_and_lf() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![Some(0.1), None]);
        t.push_values(&[-1.0 / 3.0, 1e300]);
        let s = t.to_csv();
        assert_eq!(s, "a,b\n1.0000000000000001e-1,\n-3.3333333333333331e-1,1.0000000000000001e300\n");
        let v: f64 = "1.0000000000000001e-1".parse().unwrap();
        assert_eq!(v, 0.1);
        assert!(!s.contains('\r'));
    }

    #[test]
    fn summary_shape() {
        let mut m = BTreeMap::new();
        m.insert(
            "c".to_string(),
            CheckResult { result: Verdict::Pass, measured: 1.0, expected: 1.0, tolerance: 0.1, rule: Rule::Relative },
        );
        let v: serde_json::Value = serde_json::from_str(&summary_json(&m)).unwrap();
        assert_eq!(v["c"]["result"], "pass");
        assert_eq!(v["c"]["tolerance"], 0.1);
        assert_eq!(v["c"]["rule"], "relative");
    }
}
