//! Netpbm graymaps: plain (P2) and raw (P5), 8- or 16-bit.

use super::GrayImage;
use crate::error::{Error, Result};

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(format!("PGM: {}", msg.into()))
}

/// Splits the header into whitespace tokens, skipping `#` comments, and
/// returns the byte offset just past the single whitespace byte that ends the
/// fourth token (start of raster data for P5).
fn header_tokens(bytes: &[u8]) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        if start == i {
            return Err(parse_err("truncated header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Ok((tokens, i + 1))
}

pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let (tokens, data_start) = header_tokens(bytes)?;
    let magic = tokens[0].as_str();
    let num = |t: &str, what: &str| -> Result<usize> {
        t.parse::<usize>()
            .map_err(|_| parse_err(format!("bad {what} {t:?}")))
    };
    let width = num(&tokens[1], "width")?;
    let height = num(&tokens[2], "height")?;
    let maxval = num(&tokens[3], "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(format!("maxval {maxval} out of range")));
    }
    let count = width * height;
    let raw: Vec<usize> = match magic {
        "P2" => {
            let body =
                String::from_utf8_lossy(bytes.get(data_start.min(bytes.len())..).unwrap_or(&[]));
            let vals = body
                .split_whitespace()
                .take_while(|t| !t.starts_with('#'))
                .map(|t| num(t, "sample"))
                .collect::<Result<Vec<_>>>()?;
            vals
        }
        "P5" => {
            let body = bytes.get(data_start..).unwrap_or(&[]);
            if maxval < 256 {
                body.iter().map(|&b| b as usize).collect()
            } else {
                body.chunks_exact(2)
                    .map(|p| u16::from_be_bytes([p[0], p[1]]) as usize)
                    .collect()
            }
        }
        other => return Err(parse_err(format!("unsupported magic {other:?}"))),
    };
    if raw.len() < count {
        return Err(parse_err(format!(
            "expected {count} samples, found {}",
            raw.len()
        )));
    }
    if let Some(v) = raw[..count].iter().find(|&&v| v > maxval) {
        return Err(parse_err(format!("sample {v} exceeds maxval {maxval}")));
    }
    let pixels = raw[..count]
        .iter()
        .map(|&v| v as f64 / maxval as f64)
        .collect();
    GrayImage::new(height, width, pixels)
}

fn quantize(img: &GrayImage) -> Vec<u8> {
    img.pixels()
        .iter()
        .map(|v| (v * 255.0).round() as u8)
        .collect()
}

/// Plain (P2) graymap, maxval 255, one image row per line.
pub fn write_pgm_ascii(img: &GrayImage) -> Vec<u8> {
    let q = quantize(img);
    let mut out = format!("P2\n{} {}\n255\n", img.width(), img.height());
    for row in q.chunks(img.width()) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

/// Raw (P5) graymap, maxval 255.
pub fn write_pgm_binary(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(quantize(img));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_plain_with_comments() {
        let src = b"P2\n# a comment\n3 3\n# another\n4\n0 1 2\n3 4 0\n0 0 4\n";
        let img = read_pgm(src).unwrap();
        assert_eq!(img.width(), 3);
        assert_eq!(img.get(0, 2), 0.5);
        assert_eq!(img.get(1, 1), 1.0);
    }

    #[test]
    fn raw_round_trip() {
        let img = GrayImage::from_fn(4, 5, |r, c| ((r * 5 + c) * 13 % 256) as f64 / 255.0).unwrap();
        let back = read_pgm(&write_pgm_binary(&img)).unwrap();
        assert_eq!(back, img);
        let back = read_pgm(&write_pgm_ascii(&img)).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn reads_sixteen_bit_raw() {
        let mut bytes = b"P5 3 3 65535\n".to_vec();
        for v in [0u16, 65535, 0, 0, 0, 0, 0, 0, 65535] {
            bytes.extend(v.to_be_bytes());
        }
        let img = read_pgm(&bytes).unwrap();
        assert_eq!(img.get(0, 1), 1.0);
        assert_eq!(img.get(2, 2), 1.0);
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_pgm(b"P3\n3 3\n255\n").is_err());
        assert!(read_pgm(b"P2\n3 3\n255\n1 2 3\n").is_err());
        assert!(read_pgm(b"P2\n3 3\n10\n11 0 0 0 0 0 0 0 0\n").is_err());
        assert!(read_pgm(b"P2\n3").is_err());
    }
}
