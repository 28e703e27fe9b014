//! Synthetic terrain generation, resampling, and interpolation-error estimates.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DtmGrid, TerrainError};

const COMPONENTS: usize = 30;
const MIN_WAVELENGTH: f64 = 200.0;
const MAX_WAVELENGTH: f64 = 2000.0;

struct Wave {
    kx: f64,
    ky: f64,
    amplitude: f64,
    phase: f64,
}

/// Random-phase sinusoids with wavelengths log-uniform in 200 m..2 km. When
/// `tile` is set the wave vectors are snapped to the lattice of the extent so
/// the field is exactly periodic over it.
fn waves(seed: u64, extent: [f64; 2], tile: bool) -> Vec<Wave> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..COMPONENTS)
        .map(|_| {
            let log_l = rng.gen_range(MIN_WAVELENGTH.ln()..MAX_WAVELENGTH.ln());
            let wavelength = log_l.exp();
            let heading = rng.gen_range(0.0..PI);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let mut kx = heading.cos() / wavelength;
            let mut ky = heading.sin() / wavelength;
            if tile {
                kx = (kx * extent[0]).round() / extent[0];
                ky = (ky * extent[1]).round() / extent[1];
                if kx == 0.0 && ky == 0.0 {
                    kx = 1.0 / extent[0];
                }
            }
            Wave {
                kx: 2.0 * PI * kx,
                ky: 2.0 * PI * ky,
                amplitude: wavelength.sqrt(),
                phase,
            }
        })
        .collect()
}

fn field(waves: &[Wave], x: f64, y: f64) -> f64 {
    waves
        .iter()
        .map(|w| w.amplitude * (w.kx * x + w.ky * y + w.phase).sin())
        .sum()
}

fn rescale(heights: &mut [f64], relief: f64) {
    let max = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = heights.iter().copied().fold(f64::INFINITY, f64::min);
    let span = max - min;
    for h in heights.iter_mut() {
        *h = if relief == 0.0 || span == 0.0 {
            0.0
        } else {
            (*h - min) / span * relief
        };
    }
}

fn sample_field(
    seed: u64,
    extent: [f64; 2],
    relief: f64,
    spacing: f64,
    tile: bool,
) -> Result<DtmGrid, TerrainError> {
    if !(relief >= 0.0) {
        return Err(TerrainError::NegativeRelief(relief));
    }
    if !(spacing > 0.0) {
        return Err(TerrainError::NonPositiveSpacing(spacing));
    }
    let waves = waves(seed, extent, tile);
    let steps = |e: f64| (e / spacing + 1e-9).floor() as usize;
    let (ncols, nrows) = if tile {
        (steps(extent[0]), steps(extent[1]))
    } else {
        (steps(extent[0]) + 1, steps(extent[1]) + 1)
    };
    let mut heights = Vec::with_capacity(ncols * nrows);
    for r in 0..nrows {
        for c in 0..ncols {
            heights.push(field(&waves, c as f64 * spacing, r as f64 * spacing));
        }
    }
    rescale(&mut heights, relief);
    DtmGrid::from_flat(heights, ncols, nrows, spacing, [0.0, 0.0], tile)
}

/// Smooth random terrain covering `extent` (x, y meters) from the origin,
/// sampled every `spacing` meters and rescaled so `max - min == relief`.
pub fn synth_terrain(
    seed: u64,
    extent: [f64; 2],
    relief: f64,
    spacing: f64,
) -> Result<DtmGrid, TerrainError> {
    sample_field(seed, extent, relief, spacing, false)
}

/// Periodic variant of [`synth_terrain`]: one tile of period `extent`.
pub fn synth_terrain_tile(
    seed: u64,
    extent: [f64; 2],
    relief: f64,
    spacing: f64,
) -> Result<DtmGrid, TerrainError> {
    sample_field(seed, extent, relief, spacing, true)
}

/// Samples `grid` at the nodes of a coarser lattice with the same origin.
pub fn resample_grid(grid: &DtmGrid, new_spacing: f64) -> Result<DtmGrid, TerrainError> {
    let old = grid.spacing();
    if !(new_spacing >= old) {
        return Err(TerrainError::SpacingTooFine { old, new: new_spacing });
    }
    if new_spacing == old {
        return Ok(grid.clone());
    }
    let [ex, ey] = grid.extent();
    let (ncols, nrows) = if grid.is_periodic() {
        let count = |e: f64| {
            let n = (e / new_spacing).round();
            if n < 2.0 || (n * new_spacing - e).abs() > 1e-6 * e {
                Err(TerrainError::IncommensurateSpacing { period: e, spacing: new_spacing })
            } else {
                Ok(n as usize)
            }
        };
        (count(ex)?, count(ey)?)
    } else {
        (
            (ex / new_spacing + 1e-9).floor() as usize + 1,
            (ey / new_spacing + 1e-9).floor() as usize + 1,
        )
    };
    let [ox, oy] = grid.origin();
    let mut heights = Vec::with_capacity(ncols * nrows);
    for r in 0..nrows {
        for c in 0..ncols {
            heights.push(grid.sample_height(ox + c as f64 * new_spacing, oy + r as f64 * new_spacing)?);
        }
    }
    DtmGrid::from_flat(heights, ncols, nrows, new_spacing, grid.origin(), grid.is_periodic())
}

/// Sample standard deviation of `coarse - fine` interpolated heights over
/// `n_probes` points drawn uniformly from the coarse footprint, which must lie
/// inside the fine one.
pub fn height_error_std(
    fine: &DtmGrid,
    coarse: &DtmGrid,
    n_probes: usize,
    seed: u64,
) -> Result<f64, TerrainError> {
    let [fx, fy] = fine.origin();
    let [cx, cy] = coarse.origin();
    let [fex, fey] = fine.extent();
    let [cex, cey] = coarse.extent();
    let tol = 1e-9 * (fex + fey);
    if !fine.is_periodic()
        && (cx < fx - tol || cy < fy - tol || cx + cex > fx + fex + tol || cy + cey > fy + fey + tol)
    {
        return Err(TerrainError::FootprintMismatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diffs: Vec<f64> = (0..n_probes)
        .map(|_| {
            let x = cx + rng.gen::<f64>() * cex;
            let y = cy + rng.gen::<f64>() * cey;
            Ok(coarse.sample_height(x, y)? - fine.sample_height(x, y)?)
        })
        .collect::<Result<_, TerrainError>>()?;
    if diffs.len() < 2 {
        return Ok(0.0);
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt())
}
