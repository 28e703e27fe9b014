//! Regular-grid Digital Terrain Map.
//!
//! Heights are stored row-major: node `(col, row)` sits at world
//! `(origin.x + col * spacing, origin.y + row * spacing)`. The world frame is
//! right-handed with `z` up. Between nodes the surface is the bilinear patch of
//! the four surrounding samples.
//!
//! A periodic grid tiles its `ncols x nrows` samples with period
//! `ncols * spacing` along x and `nrows * spacing` along y, so the last column
//! interpolates towards the first.

mod io;
mod synth;

pub use io::{read_dtm, write_dtm};
pub use synth::{height_error_std, resample_grid, synth_terrain, synth_terrain_tile};

use nalgebra::Vector3;
use thiserror::Error;

type Vec3 = Vector3<f64>;

/// Bisection stops once the bracket along the ray is this short (meters).
const BISECTION_BRACKET: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TerrainError {
    #[error("height rows are not rectangular (row {row} has {len} samples, expected {expected})")]
    NonRectangular { row: usize, len: usize, expected: usize },
    #[error("grid needs at least 2x2 samples, got {ncols}x{nrows}")]
    TooSmall { ncols: usize, nrows: usize },
    #[error("grid spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("non-finite height sample at index {0}")]
    NonFiniteHeight(usize),
    #[error("query ({x}, {y}) lies outside the grid footprint")]
    OutOfFootprint { x: f64, y: f64 },
    #[error("ray must point downward (direction.z = {0})")]
    NotDownward(f64),
    #[error("ray origin is below the terrain surface ({clearance} m)")]
    OriginBelowTerrain { clearance: f64 },
    #[error("ray left the grid footprint before hitting the terrain")]
    RayMissed,
    #[error("new spacing {new} is finer than the source spacing {old}")]
    SpacingTooFine { old: f64, new: f64 },
    #[error("periodic grid of period {period} m cannot be resampled at {spacing} m")]
    IncommensurateSpacing { period: f64, spacing: f64 },
    #[error("coarse grid footprint is not contained in the fine grid footprint")]
    FootprintMismatch,
    #[error("relief must be non-negative, got {0}")]
    NegativeRelief(f64),
    #[error("DTM file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("DTM i/o: {0}")]
    Io(String),
}

/// A terrain sample returned by ray tracing: the ground point and the normal
/// `(-dh/dx, -dh/dy, 1)` of the tangent plane there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPoint {
    pub position: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtmGrid {
    heights: Vec<f64>,
    ncols: usize,
    nrows: usize,
    spacing: f64,
    origin: [f64; 2],
    periodic: bool,
    max_height: f64,
    min_height: f64,
}

struct CellPos {
    h00: f64,
    h10: f64,
    h01: f64,
    h11: f64,
    u: f64,
    v: f64,
}

impl DtmGrid {
    /// Builds a grid from rows of heights; `rows[r][c]` is the sample at
    /// column `c` (x) and row `r` (y).
    pub fn build(
        rows: &[Vec<f64>],
        spacing: f64,
        origin: [f64; 2],
        periodic: bool,
    ) -> Result<Self, TerrainError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(TerrainError::NonRectangular {
                    row,
                    len: r.len(),
                    expected: ncols,
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_flat(flat, ncols, nrows, spacing, origin, periodic)
    }

    /// Builds a grid from a row-major sample buffer of `ncols * nrows` values.
    pub fn from_flat(
        heights: Vec<f64>,
        ncols: usize,
        nrows: usize,
        spacing: f64,
        origin: [f64; 2],
        periodic: bool,
    ) -> Result<Self, TerrainError> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(TerrainError::NonPositiveSpacing(spacing));
        }
        if ncols < 2 || nrows < 2 {
            return Err(TerrainError::TooSmall { ncols, nrows });
        }
        if heights.len() != ncols * nrows {
            return Err(TerrainError::NonRectangular {
                row: heights.len() / ncols,
                len: heights.len() % ncols,
                expected: ncols,
            });
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(TerrainError::NonFiniteHeight(i));
        }
        let max_height = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_height = heights.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            heights,
            ncols,
            nrows,
            spacing,
            origin,
            periodic,
            max_height,
            min_height,
        })
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn max_height(&self) -> f64 {
        self.max_height
    }

    pub fn min_height(&self) -> f64 {
        self.min_height
    }

    pub fn relief(&self) -> f64 {
        self.max_height - self.min_height
    }

    /// Row-major sample buffer.
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn node(&self, col: usize, row: usize) -> f64 {
        self.heights[row * self.ncols + col]
    }

    /// Width and height of the covered area in meters. For periodic grids this
    /// is one period.
    pub fn extent(&self) -> [f64; 2] {
        if self.periodic {
            [
                self.ncols as f64 * self.spacing,
                self.nrows as f64 * self.spacing,
            ]
        } else {
            [
                (self.ncols - 1) as f64 * self.spacing,
                (self.nrows - 1) as f64 * self.spacing,
            ]
        }
    }

    /// True when `(x, y)` can be queried (always true for periodic grids).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.periodic || self.locate(x, y).is_ok()
    }

    fn locate(&self, x: f64, y: f64) -> Result<CellPos, TerrainError> {
        let fx = (x - self.origin[0]) / self.spacing;
        let fy = (y - self.origin[1]) / self.spacing;
        if !fx.is_finite() || !fy.is_finite() {
            return Err(TerrainError::OutOfFootprint { x, y });
        }
        let (c0, c1, u) = Self::axis(fx, self.ncols, self.periodic).ok_or(TerrainError::OutOfFootprint { x, y })?;
        let (r0, r1, v) = Self::axis(fy, self.nrows, self.periodic).ok_or(TerrainError::OutOfFootprint { x, y })?;
        Ok(CellPos {
            h00: self.node(c0, r0),
            h10: self.node(c1, r0),
            h01: self.node(c0, r1),
            h11: self.node(c1, r1),
            u,
            v,
        })
    }

    fn axis(f: f64, n: usize, periodic: bool) -> Option<(usize, usize, f64)> {
        if periodic {
            let f = f.rem_euclid(n as f64);
            let i = (f.floor() as usize).min(n - 1);
            Some((i, (i + 1) % n, f - i as f64))
        } else {
            let last = (n - 1) as f64;
            if f < 0.0 || f > last {
                return None;
            }
            let i = (f.floor() as usize).min(n - 2);
            Some((i, i + 1, f - i as f64))
        }
    }

    /// Bilinear height at `(x, y)`.
    pub fn sample_height(&self, x: f64, y: f64) -> Result<f64, TerrainError> {
        let c = self.locate(x, y)?;
        Ok(c.h00 * (1.0 - c.u) * (1.0 - c.v)
            + c.h10 * c.u * (1.0 - c.v)
            + c.h01 * (1.0 - c.u) * c.v
            + c.h11 * c.u * c.v)
    }

    /// Gradient `(dh/dx, dh/dy)` of the bilinear patch containing `(x, y)`.
    pub fn gradient(&self, x: f64, y: f64) -> Result<[f64; 2], TerrainError> {
        let c = self.locate(x, y)?;
        let dx = ((c.h10 - c.h00) * (1.0 - c.v) + (c.h11 - c.h01) * c.v) / self.spacing;
        let dy = ((c.h01 - c.h00) * (1.0 - c.u) + (c.h11 - c.h10) * c.u) / self.spacing;
        Ok([dx, dy])
    }

    /// Tangent-plane normal `(-dh/dx, -dh/dy, 1)`.
    pub fn surface_normal(&self, x: f64, y: f64) -> Result<Vec3, TerrainError> {
        let [dx, dy] = self.gradient(x, y)?;
        Ok(Vec3::new(-dx, -dy, 1.0))
    }

    /// First intersection of the ray `origin + t * direction` (t >= 0) with
    /// the terrain.
    pub fn ray_intersect(&self, origin: &Vec3, direction: &Vec3) -> Result<GroundPoint, TerrainError> {
        self.ray_intersect_offset(origin, direction, 0.0)
    }

    /// Ray intersection against the surface raised by `offset` meters. The
    /// normal is that of the unshifted terrain (a constant offset does not
    /// change the slope).
    pub fn ray_intersect_offset(
        &self,
        origin: &Vec3,
        direction: &Vec3,
        offset: f64,
    ) -> Result<GroundPoint, TerrainError> {
        if !(direction.z < 0.0) {
            return Err(TerrainError::NotDownward(direction.z));
        }
        let dir = direction.normalize();
        let clearance = |t: f64| -> Result<f64, TerrainError> {
            let p = origin + dir * t;
            Ok(p.z - self.sample_height(p.x, p.y)? - offset)
        };

        let start = clearance(0.0).map_err(|_| TerrainError::RayMissed)?;
        if start < 0.0 {
            return Err(TerrainError::OriginBelowTerrain { clearance: start });
        }
        let step = 0.5 * self.spacing;
        // Nothing can be hit above the highest sample.
        let skip = (origin.z - self.max_height - offset) / -dir.z;
        let mut t_lo = if skip > step { skip - step } else { 0.0 };
        let mut g_lo = if t_lo > 0.0 {
            clearance(t_lo).map_err(|_| TerrainError::RayMissed)?
        } else {
            start
        };
        let t_limit = (origin.z - self.min_height - offset) / -dir.z + step;

        let (mut a, mut b) = loop {
            if g_lo == 0.0 {
                return self.ground_at(origin + dir * t_lo);
            }
            let t_hi = t_lo + step;
            let g_hi = clearance(t_hi).map_err(|_| TerrainError::RayMissed)?;
            if g_hi <= 0.0 {
                break (t_lo, t_hi);
            }
            if t_hi > t_limit {
                return Err(TerrainError::RayMissed);
            }
            t_lo = t_hi;
            g_lo = g_hi;
        };

        for _ in 0..MAX_BISECTIONS {
            if b - a <= BISECTION_BRACKET {
                break;
            }
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let g = clearance(mid)?;
            if g > 0.0 {
                a = mid;
            } else {
                b = mid;
                if g == 0.0 {
                    a = mid;
                    break;
                }
            }
        }
        // Pick the bracket end with the smaller height residual.
        let ga = clearance(a)?.abs();
        let gb = clearance(b)?.abs();
        let t = if ga <= gb { a } else { b };
        self.ground_at(origin + dir * t)
    }

    fn ground_at(&self, position: Vec3) -> Result<GroundPoint, TerrainError> {
        let normal = self.surface_normal(position.x, position.y)?;
        Ok(GroundPoint { position, normal })
    }

    /// Copy of the grid with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let heights = self.heights.iter().map(|h| h * factor).collect();
        Self::from_flat(heights, self.ncols, self.nrows, self.spacing, self.origin, self.periodic)
            .expect("scaling preserves grid invariants")
    }
}
