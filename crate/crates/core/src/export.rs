//! Plain-text output helpers shared by every report type.
//!
//! Reals are written with 15 significant digits. Tables are RFC-4180 CSV with
//! LF line endings, optionally preceded by `#` comment lines.

use std::io::{self, Write};

/// Formats a real with 15 significant digits, `%.15g` style.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.14e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

/// A header plus rows of already formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Table {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row of reals.
    pub fn push_reals(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|&x| fmt_real(x)).collect());
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Writes `# `-prefixed comment lines, then the CSV body.
    pub fn write_csv<W: Write>(&self, mut out: W, comments: &[String]) -> io::Result<()> {
        for c in comments {
            writeln!(out, "# {}", c)?;
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, comments: &[String]) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, comments).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }
}

/// Renders `key = value` lines.
pub fn key_values(pairs: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(v);
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_significant_digits() {
        assert_eq!(fmt_real(1.0), "1");
        assert_eq!(fmt_real(0.1), "0.1");
        assert_eq!(fmt_real(-2.5), "-2.5");
        assert_eq!(fmt_real(std::f64::consts::PI), "3.14159265358979");
        assert_eq!(fmt_real(1.0 / 3.0), "0.333333333333333");
        assert_eq!(fmt_real(1.5e-7), "1.5e-7");
        assert_eq!(fmt_real(6.02214076e23), "6.02214076e23");
        assert_eq!(fmt_real(123456.0), "123456");
        assert_eq!(fmt_real(f64::NAN), "NaN");
    }

    #[test]
    fn formatted_value_round_trips_to_15_digits() {
        for &x in &[0.026278012976678, 4.18879020478639, 1e-300, 7.5e12, -0.91896] {
            let back: f64 = fmt_real(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-14, "{x} -> {back}");
        }
    }

    #[test]
    fn csv_has_comments_and_lf() {
        let mut t = Table::new(&["a", "b"]);
        t.push_reals(&[1.0, 0.5]);
        let s = t.to_csv_string(&["seed = 1".to_string()]);
        assert_eq!(s, "# seed = 1\na,b\n1,0.5\n");
    }
}
