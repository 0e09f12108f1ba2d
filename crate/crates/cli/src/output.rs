//! CSV tables with a commented provenance header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// Header lines `# key: value` followed by a CSV table.
pub struct Table {
    header: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { header: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.header.push((key.into(), value.to_string()));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row width");
        self.rows.push(cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (k, v) in &self.header {
            for line in v.lines() {
                writeln!(out, "# {k}: {line}")?;
            }
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        self.write_to(BufWriter::new(File::create(path)?))
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_then_csv() {
        let mut t = Table::new(&["a", "b"]);
        t.meta("tool", "x").meta("config", "k = 1\nj = 2");
        t.row(vec![num(0.1), "ok, fine".into()]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "# tool: x\n# config: k = 1\n# config: j = 2\na,b\n0.1,\"ok, fine\"\n");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1e-300, 123456.789, -2.5e-7] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(f64::NAN), "NaN");
    }
}
