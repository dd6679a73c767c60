//! Fixed-format CSV output.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// Twelve significant digits in scientific notation.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// A CSV document: one provenance comment, a header and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comment: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// The comment embeds the command name and its resolved settings as JSON.
    pub fn new<C: Serialize>(command: &str, settings: &C, columns: Vec<&'static str>) -> Self {
        let json = serde_json::to_string(settings).expect("settings serialise");
        Self {
            comment: format!("# ces-qkd {command} {json}"),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.comment);
        s.push('\n');
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::BadArgs(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::BadArgs(format!("cannot write to stdout: {e}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(0.1), "1.00000000000e-1");
        assert_eq!(num(123456.7891234), "1.23456789123e5");
        assert_eq!(num(0.0), "0.00000000000e0");
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn render_layout() {
        #[derive(Serialize)]
        struct S {
            a: u32,
        }
        let mut t = Table::new("demo", &S { a: 1 }, vec!["x", "y"]);
        t.push(vec![num(1.0), "true".into()]);
        assert_eq!(t.render(), "# ces-qkd demo {\"a\":1}\nx,y\n1.00000000000e0,true\n");
    }
}
