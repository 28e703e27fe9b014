//! Plain-text DTM format.
//!
//! ```text
//! ncols 4
//! nrows 3
//! spacing 30
//! origin_x 0
//! origin_y 0
//! periodic 0
//! 0 1.5 2 2.5
//! ...
//! ```
//!
//! Six `key value` header lines in exactly this order, then `nrows` lines of
//! `ncols` whitespace-separated heights. The first data line is row 0 (the
//! southern edge, `y = origin_y`); values within a line run west to east.
//! Numbers are written with Rust's shortest round-trip `f64` formatting, so a
//! write/read cycle reproduces every sample bit for bit.

use std::io::{BufRead, Write};

use super::{DtmGrid, TerrainError};

const KEYS: [&str; 6] = ["ncols", "nrows", "spacing", "origin_x", "origin_y", "periodic"];

pub fn write_dtm<W: Write>(grid: &DtmGrid, mut out: W) -> Result<(), TerrainError> {
    let io = |e: std::io::Error| TerrainError::Io(e.to_string());
    let [ox, oy] = grid.origin();
    writeln!(out, "ncols {}", grid.ncols()).map_err(io)?;
    writeln!(out, "nrows {}", grid.nrows()).map_err(io)?;
    writeln!(out, "spacing {}", grid.spacing()).map_err(io)?;
    writeln!(out, "origin_x {ox}").map_err(io)?;
    writeln!(out, "origin_y {oy}").map_err(io)?;
    writeln!(out, "periodic {}", u8::from(grid.is_periodic())).map_err(io)?;
    for row in grid.heights().chunks(grid.ncols()) {
        let line: Vec<String> = row.iter().map(|h| h.to_string()).collect();
        writeln!(out, "{}", line.join(" ")).map_err(io)?;
    }
    Ok(())
}

pub fn read_dtm<R: BufRead>(input: R) -> Result<DtmGrid, TerrainError> {
    let mut header = [0.0f64; 6];
    let mut heights = Vec::new();
    let mut seen = 0usize;
    let parse = |line: usize, tok: &str| -> Result<f64, TerrainError> {
        tok.parse::<f64>().map_err(|_| TerrainError::Parse {
            line,
            message: format!("not a number: {tok:?}"),
        })
    };
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| TerrainError::Io(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if seen < KEYS.len() {
            let mut parts = trimmed.split_whitespace();
            let key = parts.next().unwrap_or_default();
            if !key.eq_ignore_ascii_case(KEYS[seen]) {
                return Err(TerrainError::Parse {
                    line: lineno,
                    message: format!("expected header key {:?}, found {key:?}", KEYS[seen]),
                });
            }
            let value = parts.next().ok_or_else(|| TerrainError::Parse {
                line: lineno,
                message: format!("missing value for {}", KEYS[seen]),
            })?;
            header[seen] = parse(lineno, value)?;
            seen += 1;
            continue;
        }
        let ncols = header[0] as usize;
        let before = heights.len();
        for tok in trimmed.split_whitespace() {
            heights.push(parse(lineno, tok)?);
        }
        if heights.len() - before != ncols {
            return Err(TerrainError::Parse {
                line: lineno,
                message: format!("expected {ncols} heights, found {}", heights.len() - before),
            });
        }
    }
    if seen < KEYS.len() {
        return Err(TerrainError::Parse {
            line: 0,
            message: format!("missing header key {:?}", KEYS[seen]),
        });
    }
    let (ncols, nrows) = (header[0] as usize, header[1] as usize);
    if heights.len() != ncols * nrows {
        return Err(TerrainError::Parse {
            line: 0,
            message: format!("expected {nrows} data rows, found {}", heights.len() / ncols.max(1)),
        });
    }
    DtmGrid::from_flat(heights, ncols, nrows, header[2], [header[3], header[4]], header[5] != 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::synth_terrain;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = synth_terrain(9, [600.0, 300.0], 77.7, 30.0).unwrap();
        let mut buf = Vec::new();
        write_dtm(&g, &mut buf).unwrap();
        let back = read_dtm(buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn exact_text_layout() {
        let g = DtmGrid::build(&[vec![0.0, 1.5], vec![2.0, -0.25]], 30.0, [10.0, -5.5], true).unwrap();
        let mut buf = Vec::new();
        write_dtm(&g, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "ncols 2\nnrows 2\nspacing 30\norigin_x 10\norigin_y -5.5\nperiodic 1\n0 1.5\n2 -0.25\n"
        );
    }

    #[test]
    fn reports_bad_lines() {
        let text = "ncols 2\nnrows 2\nspacing 30\norigin_x 0\norigin_y 0\nperiodic 0\n0 1\n2\n";
        assert!(matches!(read_dtm(text.as_bytes()), Err(TerrainError::Parse { line: 8, .. })));
        let text = "nrows 2\n";
        assert!(matches!(read_dtm(text.as_bytes()), Err(TerrainError::Parse { line: 1, .. })));
        let text = "ncols 2\nnrows 2\nspacing -3\norigin_x 0\norigin_y 0\nperiodic 0\n0 1\n2 3\n";
        assert_eq!(read_dtm(text.as_bytes()), Err(TerrainError::NonPositiveSpacing(-3.0)));
    }
}
