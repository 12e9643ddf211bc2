//! Trace files: `#` header lines (format version, kind, `key=value` metadata) followed
//! by comma-separated rows. Numbers are written with 17 significant digits, so a write
//! followed by a read gives back the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{CliError, Result};

pub const FORMAT_LINE: &str = "# emech-trace 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// reflection: freq_hz, re, im
    S11,
    /// noise power spectral density: freq_hz, quanta
    Psd,
    /// t_s, value
    Timeseries,
}

impl TraceKind {
    pub fn name(self) -> &'static str {
        match self {
            TraceKind::S11 => "s11",
            TraceKind::Psd => "psd",
            TraceKind::Timeseries => "timeseries",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            TraceKind::S11 => &["freq_hz", "re", "im"],
            TraceKind::Psd => &["freq_hz", "quanta"],
            TraceKind::Timeseries => &["t_s", "value"],
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "s11" => Some(TraceKind::S11),
            "psd" => Some(TraceKind::Psd),
            "timeseries" => Some(TraceKind::Timeseries),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceData {
    Complex(Vec<Complex64>),
    Real(Vec<f64>),
}

impl TraceData {
    pub fn len(&self) -> usize {
        match self {
            TraceData::Complex(v) => v.len(),
            TraceData::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub kind: TraceKind,
    /// Hz for s11/psd, s for timeseries.
    pub grid: Vec<f64>,
    pub data: TraceData,
    pub metadata: BTreeMap<String, String>,
}

/// Canonical decimal form of a float: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trace {
    pub fn complex(grid: Vec<f64>, y: Vec<Complex64>) -> Self {
        Trace {
            kind: TraceKind::S11,
            grid,
            data: TraceData::Complex(y),
            metadata: BTreeMap::new(),
        }
    }

    pub fn real(kind: TraceKind, grid: Vec<f64>, y: Vec<f64>) -> Self {
        Trace {
            kind,
            grid,
            data: TraceData::Real(y),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta_f64(&self, key: &str) -> Option<Result<f64>> {
        self.metadata.get(key).map(|v| {
            v.parse::<f64>().map_err(|_| {
                CliError::Usage(format!("trace metadata `{key}` is not a number: {v}"))
            })
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let complex = matches!(self.data, TraceData::Complex(_));
        if complex != (self.kind == TraceKind::S11) {
            return Err(CliError::Usage(format!(
                "{} trace has the wrong sample type",
                self.kind.name()
            )));
        }
        if self.data.len() != self.grid.len() {
            return Err(CliError::Usage(format!(
                "trace has {} grid points but {} samples",
                self.grid.len(),
                self.data.len()
            )));
        }
        if let Some(k) = self.grid.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(CliError::Usage(format!(
                "trace grid is not strictly increasing at row {}",
                k + 2
            )));
        }
        for (k, v) in self.metadata.keys().enumerate() {
            if v.is_empty() || v.contains(['=', '\n']) || v == "kind" {
                return Err(CliError::Usage(format!("invalid metadata key #{k}: {v:?}")));
            }
        }
        if self.metadata.values().any(|v| v.contains('\n')) {
            return Err(CliError::Usage(
                "metadata values must be single-line".into(),
            ));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(FORMAT_LINE);
        s.push('\n');
        let _ = writeln!(s, "# kind={}", self.kind.name());
        let _ = writeln!(s, "# columns={}", self.kind.columns().join(","));
        for (k, v) in &self.metadata {
            if k != "columns" {
                let _ = writeln!(s, "# {k}={v}");
            }
        }
        for (k, x) in self.grid.iter().enumerate() {
            match &self.data {
                TraceData::Complex(y) => {
                    let _ = writeln!(
                        s,
                        "{},{},{}",
                        fmt_f64(*x),
                        fmt_f64(y[k].re),
                        fmt_f64(y[k].im)
                    );
                }
                TraceData::Real(y) => {
                    let _ = writeln!(s, "{},{}", fmt_f64(*x), fmt_f64(y[k]));
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let usage = |msg: String| CliError::Usage(msg);
        let mut lines = text.lines().enumerate().peekable();
        match lines.next() {
            Some((_, l)) if l.trim_end() == FORMAT_LINE => {}
            _ => {
                return Err(usage(format!(
                    "not a trace file (expected `{FORMAT_LINE}` first)"
                )))
            }
        }
        let mut kind = None;
        let mut metadata = BTreeMap::new();
        while let Some((_, l)) = lines.peek() {
            let Some(rest) = l.strip_prefix('#') else {
                break;
            };
            let (k, v) = rest
                .trim()
                .split_once('=')
                .ok_or_else(|| usage(format!("header line without key=value: {l}")))?;
            if k == "kind" {
                kind = Some(
                    TraceKind::parse(v)
                        .ok_or_else(|| usage(format!("unknown trace kind `{v}`")))?,
                );
            } else if k != "columns" {
                metadata.insert(k.to_string(), v.to_string());
            }
            lines.next();
        }
        let kind = kind.ok_or_else(|| usage("trace header has no kind".into()))?;
        let arity = kind.columns().len();
        let mut grid = Vec::new();
        let mut re = Vec::new();
        let mut im = Vec::new();
        for (n, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = l.split(',').map(str::trim).collect();
            if cols.len() != arity {
                return Err(usage(format!(
                    "line {}: {} trace needs {arity} columns, found {}",
                    n + 1,
                    kind.name(),
                    cols.len()
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| usage(format!("line {}: not a finite number: {s}", n + 1)))
            };
            grid.push(num(cols[0])?);
            re.push(num(cols[1])?);
            if arity == 3 {
                im.push(num(cols[2])?);
            }
        }
        let data = if kind == TraceKind::S11 {
            TraceData::Complex(
                re.into_iter()
                    .zip(im)
                    .map(|(a, b)| Complex64::new(a, b))
                    .collect(),
            )
        } else {
            TraceData::Real(re)
        };
        let t = Trace {
            kind,
            grid,
            data,
            metadata,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }
}

/// A plain numeric table: one header row of column names, then rows of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }

    /// Rows as JSON objects; non-finite values become null.
    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Map<String, serde_json::Value>> = self
            .rows
            .iter()
            .map(|r| {
                self.columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.clone(), serde_json::Number::from_f64(*v).into()))
                    .collect()
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| CliError::Usage("empty table".into()))?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (n, l) in lines.enumerate() {
            let row = l
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|_| CliError::Usage(format!("table row {}: not numeric: {l}", n + 1)))?;
            if row.len() != columns.len() {
                return Err(CliError::Usage(format!(
                    "table row {}: expected {} columns, found {}",
                    n + 1,
                    columns.len(),
                    row.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { columns, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_read_is_exact() {
        let grid = vec![8.872e9 - 0.1, 8.872e9, 8.872e9 + 1.0 / 3.0];
        let y = vec![
            Complex64::new(0.1, -1e-300),
            Complex64::new(-2.0 / 3.0, 5e-17),
            Complex64::new(1.0, 0.0),
        ];
        let t = Trace::complex(grid, y)
            .with_meta("drive_hz", 8.862e9)
            .with_meta("seed", 7);
        let back = Trace::parse(&t.to_text()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), t.to_text());
    }

    #[test]
    fn malformed_traces_are_rejected() {
        let head = "# emech-trace 1\n# kind=psd\n";
        assert!(Trace::parse(&format!("{head}1,2\n1,3\n")).is_err());
        assert!(Trace::parse(&format!("{head}1,2,3\n")).is_err());
        assert!(Trace::parse(&format!("{head}1,x\n")).is_err());
        assert!(Trace::parse("1,2\n").is_err());
        assert!(Trace::parse("# emech-trace 1\n# kind=vna\n").is_err());
        let empty = Trace::parse(head).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn table_csv_round_trip() {
        let mut t = Table::new(&["a", "b"]);
        t.rows.push(vec![0.1, 1e300]);
        t.rows.push(vec![-3.0, 1.0 / 7.0]);
        assert_eq!(Table::parse_csv(&t.to_csv()).unwrap(), t);
    }
}
