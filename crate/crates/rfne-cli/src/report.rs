//! Report rendering: every report exists twice, as aligned human-readable
//! text and as a tab-delimited machine-readable file.

use std::path::{Path, PathBuf};

use rfne_core::{InferenceTable, Result};

/// A small table that renders either aligned or tab-delimited.
pub struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Table {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.headers.len(), "row width must match headers");
        self.rows.push(cells);
    }

    /// Space-padded columns, left-aligned.
    pub fn aligned(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let render = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = render(&self.headers);
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        for row in &self.rows {
            out.push('\n');
            out.push_str(&render(row));
        }
        out.push('\n');
        out
    }

    /// Tab-delimited with a header line.
    pub fn tsv(&self) -> String {
        let mut out = self.headers.join("\t");
        for row in &self.rows {
            out.push('\n');
            out.push_str(&row.join("\t"));
        }
        out.push('\n');
        out
    }
}

/// Fixed-precision float for human-readable tables.
pub fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// Scientific notation for p-values in human-readable tables.
pub fn fmt_p(p: f64) -> String {
    format!("{p:.3e}")
}

/// Full-precision float for machine-readable files.
pub fn fmt_full(v: f64) -> String {
    format!("{v}")
}

/// Writes `name` under `out_dir`, creating the directory first.
pub fn write_file(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

/// Writes the human-readable and machine-readable halves of one report.
pub fn write_report(out_dir: &Path, stem: &str, human: &str, machine: &str) -> Result<()> {
    write_file(out_dir, &format!("{stem}.txt"), human)?;
    write_file(out_dir, &format!("{stem}.tsv"), machine)?;
    Ok(())
}

/// Renders an inference table in both formats.
pub fn inference_tables(inference: &InferenceTable) -> (String, String) {
    let headers =
        ["feature", "log_odds", "std_err", "z", "p_value", "ci_low", "ci_high", "odds"];
    let mut human = Table::new(&headers);
    let mut machine = Table::new(&headers);
    for row in &inference.rows {
        human.row(vec![
            row.name.clone(),
            fmt4(row.log_odds),
            fmt4(row.std_err),
            fmt4(row.z),
            fmt_p(row.p_value),
            fmt4(row.ci_low),
            fmt4(row.ci_high),
            fmt4(row.odds),
        ]);
        machine.row(vec![
            row.name.clone(),
            fmt_full(row.log_odds),
            fmt_full(row.std_err),
            fmt_full(row.z),
            fmt_full(row.p_value),
            fmt_full(row.ci_low),
            fmt_full(row.ci_high),
            fmt_full(row.odds),
        ]);
    }
    let mut text = human.aligned();
    if inference.approximate {
        text.push_str("(standard errors are approximate: ridge term included)\n");
    }
    (text, machine.tsv())
}
