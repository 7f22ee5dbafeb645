//! Plain-text (P2) PGM image reading and writing.
//!
//! Output images are linearly rescaled so the data minimum maps to 0 and the
//! maximum to 255; a constant image writes as all zeros. The writer is
//! deterministic: identical input produces identical bytes.

use crate::scalar::{real, Scalar};
use crate::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// A parsed grayscale image with its raw sample values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub rows: usize,
    pub cols: usize,
    pub max_val: u32,
    /// Row-major samples in `0..=max_val`.
    pub pixels: Vec<u32>,
}

impl Pgm {
    /// Samples divided by `max_val`, mapping to [0, 1].
    pub fn to_unit<T: Scalar>(&self) -> Vec<T> {
        let inv = 1.0 / self.max_val as f64;
        self.pixels.iter().map(|&p| real::<T>(p as f64 * inv)).collect()
    }
}

/// Reads a plain (P2) PGM file. `#` comments are allowed anywhere whitespace
/// is.
pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let text = std::fs::read_to_string(path)?;
    let mut cleaned = String::with_capacity(text.len());
    for line in text.lines() {
        let body = match line.find('#') {
            Some(pos) => &line[..pos],
            None => line,
        };
        cleaned.push_str(body);
        cleaned.push('\n');
    }
    let mut tokens = cleaned.split_whitespace();
    let magic = tokens.next().ok_or_else(|| Error::Parse("empty PGM file".into()))?;
    if magic != "P2" {
        return Err(Error::Parse(format!("expected plain PGM magic P2, got {magic:?}")));
    }
    let mut dims = [0usize; 2];
    for (i, d) in dims.iter_mut().enumerate() {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::Parse("PGM header ended before dimensions".into()))?;
        *d = tok
            .parse()
            .map_err(|_| Error::Parse(format!("bad PGM dimension token {tok:?} at {i}")))?;
    }
    let [cols, rows] = dims;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse("PGM dimensions must be positive".into()));
    }
    let tok = tokens.next().ok_or_else(|| Error::Parse("PGM header missing max value".into()))?;
    let max_val: u32 =
        tok.parse().map_err(|_| Error::Parse(format!("bad PGM max value {tok:?}")))?;
    if max_val == 0 {
        return Err(Error::Parse("PGM max value must be positive".into()));
    }
    let mut pixels = Vec::with_capacity(rows * cols);
    for tok in tokens {
        let v: u32 =
            tok.parse().map_err(|_| Error::Parse(format!("bad PGM sample {tok:?}")))?;
        if v > max_val {
            return Err(Error::Parse(format!("sample {v} exceeds max value {max_val}")));
        }
        pixels.push(v);
    }
    if pixels.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {} samples, found {}",
            rows * cols,
            pixels.len()
        )));
    }
    Ok(Pgm { rows, cols, max_val, pixels })
}

/// Writes `data` (row-major, rows x cols) as a plain PGM, rescaling
/// min..max to 0..255.
pub fn write_pgm_scaled<T: Scalar>(
    path: &Path,
    rows: usize,
    cols: usize,
    data: &[T],
) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::InvalidArgument(format!(
            "image buffer has {} samples for {}x{}",
            data.len(),
            rows,
            cols
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("image dimensions must be positive".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in data {
        let x = v.to_f64().unwrap_or(f64::NAN);
        if !x.is_finite() {
            return Err(Error::InvalidArgument("image contains non-finite samples".into()));
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let span = hi - lo;
    let mut text = String::new();
    let _ = writeln!(text, "P2");
    let _ = writeln!(text, "{cols} {rows}");
    let _ = writeln!(text, "255");
    // Keep lines short: 17 three-digit samples stay within the classic
    // 70-character plain-format line limit.
    let mut on_line = 0usize;
    for v in data {
        let x = v.to_f64().unwrap();
        let level = if span > 0.0 { ((x - lo) / span * 255.0).round() as u32 } else { 0 };
        if on_line > 0 {
            text.push(' ');
        }
        let _ = write!(text, "{level}");
        on_line += 1;
        if on_line == 17 {
            text.push('\n');
            on_line = 0;
        }
    }
    if on_line > 0 {
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}
