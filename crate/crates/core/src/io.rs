//! File formats: binary PGM masks, the `f32g` raw float format for grids and
//! feature stacks, and JSON helpers.
//!
//! `f32g` is one JSON header line `{"dims":[...],"dtype":"f32le"}` followed
//! by the values as little-endian `f32` in row-major (`t`, row, col) order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid};
use crate::uncertainty::FeatureStack;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Binary (P5) 8-bit PGM: foreground 255, background 0.
pub fn write_pgm_mask<W: Write>(mut w: W, mask: &BinaryMask) -> Result<()> {
    write!(w, "P5\n{} {}\n255\n", mask.width(), mask.height())?;
    let bytes: Vec<u8> = mask.values().iter().map(|&v| if v { 255 } else { 0 }).collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// 8-bit grayscale PGM of raw byte values.
pub fn write_pgm_bytes<W: Write>(mut w: W, height: usize, width: usize, bytes: &[u8]) -> Result<()> {
    assert_eq!(bytes.len(), height * width);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(bytes)?;
    Ok(())
}

fn next_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            break;
        }
        match byte[0] {
            b'#' if token.is_empty() => {
                let mut comment = Vec::new();
                r.read_until(b'\n', &mut comment)?;
            }
            b if b.is_ascii_whitespace() => {
                if !token.is_empty() {
                    break;
                }
            }
            b => token.push(b),
        }
    }
    String::from_utf8(token).map_err(|_| format_err("non-ascii PGM header"))
}

/// Reads an 8-bit P5 PGM. Pixels at or above half intensity (128 of 255)
/// are foreground.
pub fn read_pgm_mask<R: Read>(r: R) -> Result<BinaryMask> {
    let mut r = BufReader::new(r);
    if next_token(&mut r)? != "P5" {
        return Err(format_err("not a binary PGM (expected P5)"));
    }
    let mut num = |what: &str| -> Result<usize> {
        next_token(&mut r)?
            .parse()
            .map_err(|_| format_err(format!("bad PGM {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(format_err(format!("unsupported PGM maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(format_err("empty PGM"));
    }
    let mut bytes = vec![0u8; width * height];
    r.read_exact(&mut bytes)
        .map_err(|_| format_err("truncated PGM pixel data"))?;
    let data = bytes.iter().map(|&b| b as usize * 255 >= 128 * maxval).collect();
    BinaryMask::new(height, width, data)
}

#[derive(Debug, Serialize, Deserialize)]
struct F32gHeader {
    dims: Vec<usize>,
    dtype: String,
}

fn write_f32g<W: Write>(mut w: W, dims: &[usize], values: &[f64]) -> Result<()> {
    let header = serde_json::to_string(&F32gHeader {
        dims: dims.to_vec(),
        dtype: "f32le".into(),
    })?;
    w.write_all(header.as_bytes())?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(values.len() * 4);
    for &v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f32g<R: Read>(r: R) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(format_err("f32g header is not newline-terminated"));
    }
    let header: F32gHeader = serde_json::from_slice(&line).map_err(|e| format_err(format!("bad f32g header: {e}")))?;
    if header.dtype != "f32le" {
        return Err(format_err(format!("unsupported f32g dtype {:?}", header.dtype)));
    }
    if header.dims.is_empty() || header.dims.contains(&0) {
        return Err(format_err(format!("bad f32g dims {:?}", header.dims)));
    }
    let n: usize = header.dims.iter().product();
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)
        .map_err(|_| format_err("truncated f32g payload"))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(format_err("trailing bytes after f32g payload"));
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(format_err("f32g payload contains non-finite values"));
    }
    Ok((header.dims, values))
}

/// Writes a grid with dims `[H, W]`. Values are narrowed to `f32`.
pub fn write_grid<W: Write>(w: W, g: &Grid) -> Result<()> {
    write_f32g(w, &[g.height(), g.width()], g.values())
}

pub fn read_grid<R: Read>(r: R) -> Result<Grid> {
    let (dims, values) = read_f32g(r)?;
    match dims.as_slice() {
        [h, w] => Grid::new(*h, *w, values),
        [1, h, w] => Grid::new(*h, *w, values),
        _ => Err(format_err(format!("expected grid dims [H, W], got {dims:?}"))),
    }
}

/// Writes a stack with dims `[T, H, W]`.
pub fn write_stack<W: Write>(w: W, s: &FeatureStack) -> Result<()> {
    write_f32g(w, &[s.passes(), s.height(), s.width()], s.values())
}

pub fn read_stack<R: Read>(r: R) -> Result<FeatureStack> {
    let (dims, values) = read_f32g(r)?;
    match dims.as_slice() {
        [t, h, w] => FeatureStack::new(*t, *h, *w, values),
        _ => Err(format_err(format!("expected stack dims [T, H, W], got {dims:?}"))),
    }
}

/// Rounds a float to 9 significant digits.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig9(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to 9 significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_floats(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

// Path helpers used by the CLI. Errors carry the path for context.

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Format(format!("{}: {io}", path.display())),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Json(j) => Error::Format(format!("{}: {j}", path.display())),
        other => other,
    })
}

fn open(path: &Path) -> Result<fs::File> {
    with_path(path, fs::File::open(path).map_err(Error::from))
}

pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    with_path(path, read_pgm_mask(open(path)?))
}

pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let mut buf = Vec::new();
    write_pgm_mask(&mut buf, mask)?;
    with_path(path, fs::write(path, buf).map_err(Error::from))
}

pub fn load_grid(path: &Path) -> Result<Grid> {
    with_path(path, read_grid(open(path)?))
}

pub fn save_grid(path: &Path, g: &Grid) -> Result<()> {
    let mut buf = Vec::new();
    write_grid(&mut buf, g)?;
    with_path(path, fs::write(path, buf).map_err(Error::from))
}

pub fn load_stack(path: &Path) -> Result<FeatureStack> {
    with_path(path, read_stack(open(path)?))
}

pub fn save_stack(path: &Path, s: &FeatureStack) -> Result<()> {
    let mut buf = Vec::new();
    write_stack(&mut buf, s)?;
    with_path(path, fs::write(path, buf).map_err(Error::from))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = with_path(path, fs::read_to_string(path).map_err(Error::from))?;
    with_path(path, serde_json::from_str(&text).map_err(Error::from))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value)?;
    with_path(path, fs::write(path, text).map_err(Error::from))
}

/// Grayscale rendering of `base` (min-max scaled to 0..=200) with `contour`
/// pixels drawn at 255.
pub fn contour_overlay(base: &Grid, contour: &BinaryMask) -> Result<Vec<u8>> {
    base.ensure_same_shape(contour.shape())?;
    let (lo, hi) = base.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    Ok(base
        .values()
        .iter()
        .zip(contour.values())
        .map(|(&v, &on)| {
            if on {
                255
            } else {
                (((v - lo) / span) * 200.0).round() as u8
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ExtremePoints, PointRC};

    #[test]
    fn pgm_header_and_threshold() {
        let m = BinaryMask::from_fn(2, 3, |r, c| r == c);
        let mut buf = Vec::new();
        write_pgm_mask(&mut buf, &m).unwrap();
        assert_eq!(&buf[..11], b"P5\n3 2\n255\n");
        assert_eq!(read_pgm_mask(&buf[..]).unwrap(), m);

        let mut gray = b"P5\n# comment\n4 1\n255\n".to_vec();
        gray.extend_from_slice(&[0, 127, 128, 200]);
        let m = read_pgm_mask(&gray[..]).unwrap();
        assert_eq!(m.values(), &[false, false, true, true]);
    }

    #[test]
    fn malformed_pgm() {
        assert!(matches!(read_pgm_mask(&b"P2\n1 1\n255\n0"[..]), Err(Error::Format(_))));
        assert!(matches!(
            read_pgm_mask(&b"P5\n4 4\n255\n\x00"[..]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_pgm_mask(&b"P5\n1 1\n65535\n\x00\x00"[..]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn f32g_layout() {
        let g = Grid::new(1, 2, vec![1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_grid(&mut buf, &g).unwrap();
        let header = br#"{"dims":[1,2],"dtype":"f32le"}"#;
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf[header.len()], b'\n');
        assert_eq!(&buf[header.len() + 1..header.len() + 5], &1.0f32.to_le_bytes());
        assert_eq!(read_grid(&buf[..]).unwrap(), g);
    }

    #[test]
    fn malformed_f32g() {
        assert!(read_grid(&br#"{"dims":[2,2],"dtype":"f64le"}"#[..]).is_err());
        let mut short = br#"{"dims":[2,2],"dtype":"f32le"}"#.to_vec();
        short.push(b'\n');
        short.extend_from_slice(&[0u8; 12]);
        assert!(matches!(read_grid(&short[..]), Err(Error::Format(_))));
        let mut nan = br#"{"dims":[1,1],"dtype":"f32le"}"#.to_vec();
        nan.push(b'\n');
        nan.extend_from_slice(&f32::NAN.to_le_bytes());
        assert!(read_grid(&nan[..]).is_err());
        let mut stack_dims = br#"{"dims":[4,4],"dtype":"f32le"}"#.to_vec();
        stack_dims.push(b'\n');
        stack_dims.extend_from_slice(&[0u8; 64]);
        assert!(read_stack(&stack_dims[..]).is_err());
    }

    #[test]
    fn extreme_points_json_shape() {
        let p = |r, c| PointRC::new(r, c);
        let ep = ExtremePoints::new(p(0, 2), p(4, 2), p(2, 0), p(2, 4)).unwrap();
        let s = serde_json::to_string(&ep).unwrap();
        assert_eq!(s, r#"{"top":[0,2],"bottom":[4,2],"left":[2,0],"right":[2,4]}"#);
        let back: ExtremePoints = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ep);
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(round_sig9(0.978_861_003_730_5), 0.978_861_004);
        assert_eq!(round_sig9(123_456.789_012_3), 123_456.789);
        assert_eq!(round_sig9(0.0), 0.0);
        #[derive(Serialize)]
        struct R {
            usc: f64,
            n: usize,
        }
        let s = to_json_string(&R { usc: 1.0 / 3.0, n: 4 }).unwrap();
        assert!(s.contains("\"usc\": 0.333333333"), "{s}");
        assert!(s.contains("\"n\": 4"));
    }
}
