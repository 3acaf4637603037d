//! Result tables in the layout of the distillation experiments: one row per
//! plan, BLEU and TER in points on the validation and test sets.

use crate::{Error, Result};

/// One evaluated student configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub setup: String,
    pub parallel_data: String,
    /// `scratch` or `continue`.
    pub init: String,
    pub train_pairs: usize,
    pub epochs: u64,
    pub val_bleu: f64,
    pub val_ter: f64,
    pub test_bleu: f64,
    pub test_ter: f64,
}

const COLUMNS: [&str; 9] = [
    "setup",
    "parallel_data",
    "init",
    "train_pairs",
    "epochs",
    "val_bleu",
    "val_ter",
    "test_bleu",
    "test_ter",
];

impl ReportRow {
    fn cells(&self) -> [String; 9] {
        [
            self.setup.clone(),
            self.parallel_data.clone(),
            self.init.clone(),
            self.train_pairs.to_string(),
            self.epochs.to_string(),
            format!("{:.2}", self.val_bleu),
            format!("{:.2}", self.val_ter),
            format!("{:.2}", self.test_bleu),
            format!("{:.2}", self.test_ter),
        ]
    }
}

/// Tab-separated report with a header line.
pub fn render_tsv(rows: &[ReportRow]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells().join("\t"));
        out.push('\n');
    }
    out
}

/// Reads rows written by [`render_tsv`]; header lines are skipped.
pub fn parse_tsv(text: &str) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() || line == COLUMNS.join("\t") {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != COLUMNS.len() {
            return Err(Error::Data(format!(
                "report line {}: expected {} fields, found {}",
                n + 1,
                COLUMNS.len(),
                f.len()
            )));
        }
        let bad = |col: &str| Error::Data(format!("report line {}: invalid {col}", n + 1));
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(COLUMNS[i]));
        rows.push(ReportRow {
            setup: f[0].to_string(),
            parallel_data: f[1].to_string(),
            init: f[2].to_string(),
            train_pairs: f[3].parse().map_err(|_| bad(COLUMNS[3]))?,
            epochs: f[4].parse().map_err(|_| bad(COLUMNS[4]))?,
            val_bleu: num(5)?,
            val_ter: num(6)?,
            test_bleu: num(7)?,
            test_ter: num(8)?,
        });
    }
    Ok(rows)
}

/// Column-aligned text table.
pub fn render_report(rows: &[ReportRow]) -> String {
    let cells: Vec<[String; 9]> = rows.iter().map(ReportRow::cells).collect();
    let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |vals: Vec<&str>| -> String {
        let parts: Vec<String> = vals
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (v, w))| if i < 3 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        parts.join(" | ").trim_end().to_string() + "\n"
    };
    let mut out = line(COLUMNS.to_vec());
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in &cells {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}
