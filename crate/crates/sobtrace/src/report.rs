//! Experiment reports and their CSV form.
//!
//! Layout: `# key = value` parameter lines, a header row, one row per
//! sample, then a single `# summary` line.

use std::io::Write;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Num(f64),
    Flag(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(v) => v.to_string(),
            Cell::Flag(b) => b.to_string(),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Cell {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Cell {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Cell {
        Cell::Num(v)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Cell {
        Cell::Flag(b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub id: String,
    pub parameters: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Vec<(String, String)>,
    pub passed: bool,
}

impl ExperimentReport {
    pub fn new(id: &str, parameters: Vec<(String, String)>, columns: &[&str]) -> ExperimentReport {
        ExperimentReport {
            id: id.to_string(),
            parameters,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: Vec::new(),
            passed: false,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    /// Numeric column by name.
    pub fn column(&self, name: &str) -> Vec<f64> {
        let Some(i) = self.columns.iter().position(|c| c == name) else {
            return Vec::new();
        };
        self.rows.iter().filter_map(|r| r[i].as_num()).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e: std::io::Error| crate::error::HarnessError::Io { path: String::from("<report>"), source: e };
        writeln!(out, "# experiment = {}", self.id).map_err(io)?;
        for (k, v) in &self.parameters {
            writeln!(out, "# {k} = {v}").map_err(io)?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(&self.columns)?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render))?;
            }
            w.flush().map_err(io)?;
        }
        let summary: Vec<String> = std::iter::once(format!("pass={}", self.passed))
            .chain(self.summary.iter().map(|(k, v)| format!("{k}={v}")))
            .collect();
        writeln!(out, "# summary {}", summary.join(" ")).map_err(io)?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("report is UTF-8"))
    }
}

/// Min, max and median of a non-empty sample.
pub fn spread_stats(values: &[f64]) -> (f64, f64, f64) {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let median = if v.len() % 2 == 1 { v[v.len() / 2] } else { 0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2]) };
    (v[0], v[v.len() - 1], median)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut r = ExperimentReport::new("demo", vec![("p".into(), "2".into())], &["id", "ratio", "ok"]);
        r.push(vec!["C0".into(), 0.5.into(), true.into()]);
        r.push(vec!["a,b".into(), 2.0.into(), false.into()]);
        r.passed = true;
        r.note("max_ratio", 2.0);
        let text = r.to_csv_string().unwrap();
        assert_eq!(
            text,
            "# experiment = demo\n# p = 2\nid,ratio,ok\nC0,0.5,true\n\"a,b\",2,false\n# summary pass=true max_ratio=2\n"
        );
        assert_eq!(r.column("ratio"), vec![0.5, 2.0]);
    }

    #[test]
    fn stats() {
        assert_eq!(spread_stats(&[3.0, 1.0, 2.0]), (1.0, 3.0, 2.0));
        assert_eq!(spread_stats(&[4.0, 1.0, 2.0, 3.0]), (1.0, 4.0, 2.5));
    }
}
