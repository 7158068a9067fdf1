//! Sanding as cumulative Gaussian material removal, and the deviation of the
//! resulting surface from its local average.
//!
//! Each stored trajectory sample deposits an isotropic Gaussian imprint with
//! `sigma = tool_radius / 2`, truncated to a `+-3 sigma` box and renormalized so
//! a fully in-grid stamp adds exactly its mass. Cell values are the exact
//! integral of the density over the cell (a product of two erf differences).

use std::io::{self, BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::path::TrajectoryLog;

/// Truncation half-width in standard deviations.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurfaceError {
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("deviation window must be odd and at least 1, got {0}")]
    InvalidWindow(usize),
    #[error("grid text: {0}")]
    Parse(String),
}

/// Geometry of a regular grid over the surface plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Side of a square cell, millimeters.
    pub cell_size: f64,
    /// Lower-left corner of cell (0, 0), millimeters.
    pub origin: Vec2,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, cell_size: f64) -> Result<Self, SurfaceError> {
        let g = Self {
            width,
            height,
            cell_size,
            origin: Vec2::ZERO,
        };
        g.validate()?;
        Ok(g)
    }

    /// Smallest grid of `cell_size` cells covering a `width_mm` x `height_mm`
    /// rectangle anchored at the origin.
    pub fn covering(width_mm: f64, height_mm: f64, cell_size: f64) -> Result<Self, SurfaceError> {
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(SurfaceError::InvalidGrid("cell size must be positive".into()));
        }
        let w = (width_mm / cell_size - 1e-9).ceil().max(1.0) as usize;
        let h = (height_mm / cell_size - 1e-9).ceil().max(1.0) as usize;
        Self::new(w, h, cell_size)
    }

    pub fn validate(&self) -> Result<(), SurfaceError> {
        if self.width == 0 || self.height == 0 {
            return Err(SurfaceError::InvalidGrid(
                "grid must have at least one cell".into(),
            ));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(SurfaceError::InvalidGrid("cell size must be positive".into()));
        }
        if !self.origin.is_finite() {
            return Err(SurfaceError::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + (row as f64 + 0.5) * self.cell_size,
        )
    }
}

/// A row-major grid of values (row 0 at the lowest y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub spec: GridSpec,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            data: vec![0.0; spec.len()],
            spec,
        }
    }

    pub fn from_rows(spec: GridSpec, data: Vec<f64>) -> Result<Self, SurfaceError> {
        spec.validate()?;
        if data.len() != spec.len() {
            return Err(SurfaceError::InvalidGrid(format!(
                "expected {} values, got {}",
                spec.len(),
                data.len()
            )));
        }
        Ok(Self { spec, data })
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.spec.width + col]
    }

    pub fn get_mut(&mut self, col: usize, row: usize) -> &mut f64 {
        &mut self.data[row * self.spec.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Space-separated rows, top row (highest y) first.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        for row in (0..self.height()).rev() {
            let line: Vec<String> = (0..self.width()).map(|c| self.get(c, row).to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("grid text is ASCII")
    }

    /// Parses the format written by [`Grid::write_text`].
    pub fn read_text<R: BufRead>(input: R, cell_size: f64) -> Result<Self, SurfaceError> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| SurfaceError::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| SurfaceError::Parse(format!("line {}: {e}", n + 1)))?;
            if row.iter().any(|v| !v.is_finite()) {
                return Err(SurfaceError::Parse(format!("line {}: non-finite value", n + 1)));
            }
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(SurfaceError::Parse(format!("line {}: ragged row", n + 1)));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(SurfaceError::Parse("no rows".into()));
        }
        let spec = GridSpec::new(rows[0].len(), rows.len(), cell_size)?;
        let data = rows.into_iter().rev().flatten().collect();
        Self::from_rows(spec, data)
    }

    /// 16-bit binary portable graymap, linear min-max scaling, top row first.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
        write!(out, "P5\n{} {}\n65535\n", self.width(), self.height())?;
        let span = hi - lo;
        let mut bytes = Vec::with_capacity(self.data.len() * 2);
        for row in (0..self.height()).rev() {
            for col in 0..self.width() {
                let level = if span > 0.0 {
                    ((self.get(col, row) - lo) / span * 65535.0).round() as u16
                } else {
                    0
                };
                bytes.extend_from_slice(&level.to_be_bytes());
            }
        }
        out.write_all(&bytes)
    }

    /// Summed-area table with a zero border: entry (c, r) holds the sum of all
    /// cells with col < c and row < r.
    fn integral(&self) -> Vec<f64> {
        let (w, h) = (self.width(), self.height());
        let mut s = vec![0.0; (w + 1) * (h + 1)];
        for r in 0..h {
            let mut row_sum = 0.0;
            for c in 0..w {
                row_sum += self.get(c, r);
                s[(r + 1) * (w + 1) + c + 1] = s[r * (w + 1) + c + 1] + row_sum;
            }
        }
        s
    }
}

/// Cumulative removed mass per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap(pub Grid);

impl Heatmap {
    pub fn new(spec: GridSpec) -> Result<Self, SurfaceError> {
        spec.validate()?;
        Ok(Self(Grid::zeros(spec)))
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn spec(&self) -> &GridSpec {
        &self.0.spec
    }

    pub fn total_mass(&self) -> f64 {
        self.0.sum()
    }

    /// Adds one analytic Gaussian imprint. Off-grid parts are discarded.
    pub fn stamp_imprint(&mut self, center: Vec2, tool_radius: f64, mass: f64) {
        debug_assert!(tool_radius > 0.0 && mass > 0.0);
        let sigma = tool_radius / 2.0;
        let spec = self.0.spec;
        let Some(xs) = axis_weights(center.x, sigma, spec.origin.x, spec.cell_size, spec.width) else {
            return;
        };
        let Some(ys) = axis_weights(center.y, sigma, spec.origin.y, spec.cell_size, spec.height) else {
            return;
        };
        for (row, wy) in ys.iter() {
            let base = row * spec.width;
            for (col, wx) in xs.iter() {
                self.0.data[base + col] += mass * wx * wy;
            }
        }
    }

    /// Monte Carlo imprint: `particles` draws from the truncated Gaussian, each
    /// adding `mass / particles` to the cell it lands in.
    pub fn stamp_sampled<R: Rng + ?Sized>(
        &mut self,
        center: Vec2,
        tool_radius: f64,
        mass: f64,
        particles: usize,
        rng: &mut R,
    ) {
        let sigma = tool_radius / 2.0;
        let spec = self.0.spec;
        let share = mass / particles as f64;
        let draw = |rng: &mut R| loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= TRUNCATION_SIGMAS {
                return z * sigma;
            }
        };
        for _ in 0..particles {
            let x = center.x + draw(rng);
            let y = center.y + draw(rng);
            let col = ((x - spec.origin.x) / spec.cell_size).floor();
            let row = ((y - spec.origin.y) / spec.cell_size).floor();
            if col >= 0.0 && row >= 0.0 && (col as usize) < spec.width && (row as usize) < spec.height {
                *self.0.get_mut(col as usize, row as usize) += share;
            }
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Normalized per-cell weights of a 1D truncated Gaussian along one axis.
fn axis_weights(center: f64, sigma: f64, origin: f64, cell: f64, cells: usize) -> Option<Vec<(usize, f64)>> {
    let half = TRUNCATION_SIGMAS * sigma;
    let lo = center - half;
    let hi = center + half;
    let first = ((lo - origin) / cell).floor().max(0.0);
    let last = ((hi - origin) / cell).ceil().min(cells as f64);
    if first >= last {
        return None;
    }
    let norm = 2.0 * std_normal_cdf(TRUNCATION_SIGMAS) - 1.0;
    let mut out = Vec::with_capacity((last - first) as usize);
    let mut prev_cdf = None;
    for idx in first as usize..last as usize {
        let a = (origin + idx as f64 * cell).max(lo);
        let b = (origin + (idx + 1) as f64 * cell).min(hi);
        if b <= a {
            continue;
        }
        let ca = prev_cdf
            .filter(|_| a > lo)
            .unwrap_or_else(|| std_normal_cdf((a - center) / sigma));
        let cb = std_normal_cdf((b - center) / sigma);
        prev_cdf = Some(cb);
        out.push((idx, (cb - ca) / norm));
    }
    Some(out)
}

/// Replays a trajectory log: one analytic imprint per stored sample.
pub fn replay_trajectory(
    log: &TrajectoryLog,
    tool_radius: f64,
    mass_per_sample: f64,
    grid: GridSpec,
) -> Result<Heatmap, SurfaceError> {
    if log.is_empty() {
        return Err(SurfaceError::EmptyLog);
    }
    let mut map = Heatmap::new(grid)?;
    for p in &log.samples {
        map.stamp_imprint(p.xy(), tool_radius, mass_per_sample);
    }
    Ok(map)
}

/// Same as [`replay_trajectory`] with sampled imprints.
pub fn replay_trajectory_sampled<R: Rng + ?Sized>(
    log: &TrajectoryLog,
    tool_radius: f64,
    mass_per_sample: f64,
    grid: GridSpec,
    particles: usize,
    rng: &mut R,
) -> Result<Heatmap, SurfaceError> {
    if log.is_empty() {
        return Err(SurfaceError::EmptyLog);
    }
    let mut map = Heatmap::new(grid)?;
    for p in &log.samples {
        map.stamp_sampled(p.xy(), tool_radius, mass_per_sample, particles, rng);
    }
    Ok(map)
}

/// Signed deviation of each cell from the mean of its `window` x `window`
/// neighborhood (truncated at the grid edges).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationMap {
    pub grid: Grid,
    pub window: usize,
    /// Total mass of the heatmap the map was derived from; zero if unknown.
    pub reference_mass: f64,
}

impl DeviationMap {
    /// Wraps an externally produced deviation grid.
    pub fn from_grid(grid: Grid, window: usize) -> Self {
        Self {
            grid,
            window,
            reference_mass: 0.0,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.grid.spec
    }
}

/// Smallest odd window whose neighborhood covers the whole grid from any cell.
pub fn global_window(spec: &GridSpec) -> usize {
    2 * spec.width.max(spec.height) - 1
}

/// Default window: `8 * tool_radius` in cells, odd, capped at the global window.
pub fn default_window(spec: &GridSpec, tool_radius: f64) -> usize {
    let cells = (8.0 * tool_radius / spec.cell_size).round().max(1.0) as usize;
    let odd = if cells.is_multiple_of(2) { cells + 1 } else { cells };
    odd.min(global_window(spec))
}

pub fn deviation_map(map: &Heatmap, window: usize) -> Result<DeviationMap, SurfaceError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(SurfaceError::InvalidWindow(window));
    }
    let g = map.grid();
    let (w, h) = (g.width(), g.height());
    let half = window / 2;
    let sat = g.integral();
    let at = |c: usize, r: usize| sat[r * (w + 1) + c];
    // Values this close to the local mean are rounding noise of the
    // summed-area table.
    let noise = 1e-12 * g.max_abs();
    let mut out = Grid::zeros(g.spec);
    for r in 0..h {
        let r0 = r.saturating_sub(half);
        let r1 = (r + half + 1).min(h);
        for c in 0..w {
            let c0 = c.saturating_sub(half);
            let c1 = (c + half + 1).min(w);
            let sum = at(c1, r1) - at(c0, r1) - at(c1, r0) + at(c0, r0);
            let count = ((r1 - r0) * (c1 - c0)) as f64;
            let dev = g.get(c, r) - sum / count;
            *out.get_mut(c, r) = if dev.abs() <= noise { 0.0 } else { dev };
        }
    }
    Ok(DeviationMap {
        grid: out,
        window,
        reference_mass: map.total_mass(),
    })
}
