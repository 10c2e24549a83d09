//! Single-channel portable float map (`Pf`) reading and writing.
//!
//! The header is `Pf\n<width> <height>\n<scale>\n`; a negative scale marks
//! little-endian payload. Rows are stored bottom-up.

use std::fs;
use std::io::Write;
use std::path::Path;

use spw_core::RealGrid;

use crate::error::{CliError, CliResult};

/// Encodes a grid as little-endian single-channel PFM bytes.
pub fn encode(grid: &RealGrid) -> Vec<u8> {
    let (h, w) = (grid.height(), grid.width());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * h * w);
    for row in (0..h).rev() {
        for col in 0..w {
            out.extend_from_slice(&(grid.get(row, col) as f32).to_le_bytes());
        }
    }
    out
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| std::str::from_utf8(&bytes[start..*pos]).ok()).flatten()
}

/// Decodes single-channel PFM bytes of either endianness.
pub fn decode(bytes: &[u8]) -> CliResult<RealGrid> {
    let bad = |msg: &str| CliError::input(format!("invalid PFM: {msg}"));
    let mut pos = 0;
    match next_token(bytes, &mut pos) {
        Some("Pf") => {}
        Some("PF") => return Err(bad("three-channel PF maps are not supported")),
        _ => return Err(bad("missing Pf magic")),
    }
    let mut number = |what: &str| next_token(bytes, &mut pos).ok_or_else(|| bad(&format!("missing {what}")));
    let width: usize = number("width")?.parse().map_err(|_| bad("bad width"))?;
    let height: usize = number("height")?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = number("scale")?.parse().map_err(|_| bad("bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("scale must be nonzero"));
    }
    // Exactly one whitespace byte separates the header from the payload.
    pos += 1;
    let expected = width.checked_mul(height).and_then(|n| n.checked_mul(4)).ok_or_else(|| bad("size overflow"))?;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != expected {
        return Err(bad(&format!("expected {expected} payload bytes, found {}", payload.len())));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0; width * height];
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row_from_bottom, col) = (i / width, i % width);
        data[(height - 1 - row_from_bottom) * width + col] = f64::from(v);
    }
    RealGrid::new(height, width, data).map_err(|e| bad(&e.to_string()))
}

pub fn read(path: &Path) -> CliResult<RealGrid> {
    let bytes = fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, grid: &RealGrid) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(|e| CliError::internal(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(&encode(grid)).map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}
