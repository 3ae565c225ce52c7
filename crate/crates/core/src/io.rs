//! Text formats: whitespace matrices, CSV matrices and traces, and JSON with
//! fixed 17-significant-digit floats so that golden files are bit-stable.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Formats a float with 17 significant digits (exact `f64` round trip).
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        // JSON and CSV consumers both treat these as strings; never produced
        // for validated values.
        format!("{x}")
    }
}

/// "rows cols" header then one whitespace-separated row per line.
pub fn write_matrix_text(m: &Matrix) -> String {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_matrix_text(text: &str) -> Result<Matrix> {
    let mut tokens = text.split_whitespace();
    let mut dim = |what: &str| -> Result<usize> {
        tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("missing {what} in matrix header")))?
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
    };
    let rows = dim("row count")?;
    let cols = dim("column count")?;
    let data = tokens
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad matrix entry {t:?}: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "matrix declares {rows}x{cols} but holds {} entries",
            data.len()
        )));
    }
    Matrix::from_vec(rows, cols, data)
}

/// Comma-separated float matrix, one row per line, no header.
pub fn write_csv_matrix(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn read_csv_matrix(text: &str) -> Result<Matrix> {
    let rows = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad CSV entry {t:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// Single-column CSV with header `value`.
pub fn write_trace_csv(values: &[f64]) -> String {
    let mut out = String::from("value\n");
    for &v in values {
        out.push_str(&fmt17(v));
        out.push('\n');
    }
    out
}

pub fn read_trace_csv(text: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines();
    match lines.next().map(str::trim) {
        Some("value") => {}
        other => {
            return Err(Error::Parse(format!(
                "trace CSV must start with header \"value\", found {other:?}"
            )))
        }
    }
    lines
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad trace value {l:?}: {e}")))
        })
        .collect()
}

/// serde_json formatter that writes every float with 17 significant digits.
struct Fixed17;

impl serde_json::ser::Formatter for Fixed17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Compact JSON with 17-digit floats and a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed17);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matrix_text_layout() {
        let m = Matrix::from_rows(&[vec![0.25, 0.25], vec![0.5, 0.0]]).unwrap();
        let text = write_matrix_text(&m);
        assert!(text.starts_with("2 2\n"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_matrix_text(&text).unwrap(), m);
    }

    #[test]
    fn matrix_text_rejects_short_body() {
        assert!(read_matrix_text("2 2\n1 2 3\n").is_err());
    }

    #[test]
    fn trace_csv_header_required() {
        assert!(read_trace_csv("x\n1\n").is_err());
        assert_eq!(read_trace_csv("value\n1\n2.5\n").unwrap(), vec![1.0, 2.5]);
    }

    #[test]
    fn json_floats_are_seventeen_digits() {
        #[derive(Serialize)]
        struct R {
            a: f64,
            n: usize,
        }
        let s = to_json(&R { a: 0.1, n: 3 }).unwrap();
        assert_eq!(s, "{\"a\":1.0000000000000001e-1,\"n\":3}\n");
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), 0.1);
    }

    proptest! {
        #[test]
        fn matrix_text_round_trips_bitwise(
            rows in 1usize..5, cols in 1usize..5,
            seed in proptest::collection::vec(-1e300f64..1e300, 25)
        ) {
            let data: Vec<f64> = seed.into_iter().take(rows * cols).collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let back = read_matrix_text(&write_matrix_text(&m)).unwrap();
            for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            let csv = read_csv_matrix(&write_csv_matrix(&m)).unwrap();
            prop_assert_eq!(csv, m);
        }
    }
}
