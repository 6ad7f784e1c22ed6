//! Fixed numeric formatting shared by the JSON, CSV and table writers.

use serde_json::value::RawValue;

pub const MM_PLACES: usize = 6;
pub const RAD_PLACES: usize = 9;

fn fixed_str(v: f64, places: usize) -> String {
    if !v.is_finite() {
        return "null".into();
    }
    let s = format!("{v:.places$}");
    // "-0.000000" and "0.000000" are the same number
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn mm_str(v: f64) -> String {
    fixed_str(v, MM_PLACES)
}

pub fn rad_str(v: f64) -> String {
    fixed_str(v, RAD_PLACES)
}

pub fn sci_str(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3e}")
    } else {
        "null".into()
    }
}

fn raw(s: String) -> Box<RawValue> {
    RawValue::from_string(s).expect("formatted numbers are valid JSON")
}

pub fn mm(v: f64) -> Box<RawValue> {
    raw(mm_str(v))
}

pub fn rad(v: f64) -> Box<RawValue> {
    raw(rad_str(v))
}

pub fn sci(v: f64) -> Box<RawValue> {
    raw(sci_str(v))
}

/// Right-aligned text table.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}
