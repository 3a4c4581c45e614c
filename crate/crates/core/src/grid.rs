//! Radial and polar grids on discs and annuli, and scalar fields on them.
//!
//! Polar grids are uniform in both coordinates. Ring i sits at radius
//! `r_in + i·h`; a disc grid has `r_in = 0` and collapses ring 0 to a single
//! shared center node. Angles are `θ_j = j·2π/angular_nodes`.

use crate::interp;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid radial extent: r_in = {r_in}, r_out = {r_out}")]
    InvalidExtent { r_in: f64, r_out: f64 },
    #[error("need at least 3 radial nodes, got {0}")]
    TooFewRadialNodes(usize),
    #[error("angular node count must be even and >= 8, got {0}")]
    BadAngularNodes(usize),
    #[error("value count {found} does not match grid node count {expected}")]
    ValueCountMismatch { expected: usize, found: usize },
    #[error("non-finite value at node {0}")]
    NonFiniteValue(usize),
    #[error("radius {r} is outside the grid extent [{r_in}, {r_out}]")]
    RadiusOutOfRange { r: f64, r_in: f64, r_out: f64 },
    #[error("csv parse error: {0}")]
    Csv(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Uniform 1-D grid in the radius. `r_in = 0` is a ball grid whose first node
/// is the center; `r_in > 0` is an annulus with Dirichlet ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_in: f64,
    pub r_out: f64,
    pub nodes: usize,
}

impl RadialGrid {
    pub fn new(r_in: f64, r_out: f64, nodes: usize) -> Result<Self, GridError> {
        if !(r_in >= 0.0 && r_in < r_out && r_out.is_finite()) {
            return Err(GridError::InvalidExtent { r_in, r_out });
        }
        if nodes < 3 {
            return Err(GridError::TooFewRadialNodes(nodes));
        }
        Ok(Self { r_in, r_out, nodes })
    }

    pub fn h(&self) -> f64 {
        (self.r_out - self.r_in) / (self.nodes - 1) as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.r_in + self.h() * i as f64
    }

    pub fn is_ball(&self) -> bool {
        self.r_in == 0.0
    }

    /// Dirichlet nodes: both ends for an annulus, the outer end for a ball.
    pub fn is_boundary(&self, i: usize) -> bool {
        i + 1 == self.nodes || (i == 0 && !self.is_ball())
    }
}

/// Uniform polar grid. Annulus (`includes_center = false`, `r_in > 0`) or
/// disc (`includes_center = true`, `r_in = 0`, single center node).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub r_in: f64,
    pub r_out: f64,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub includes_center: bool,
}

impl PolarGrid {
    pub fn annulus(
        r_in: f64,
        r_out: f64,
        radial_nodes: usize,
        angular_nodes: usize,
    ) -> Result<Self, GridError> {
        if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
            return Err(GridError::InvalidExtent { r_in, r_out });
        }
        Self::validate(radial_nodes, angular_nodes)?;
        Ok(Self {
            r_in,
            r_out,
            radial_nodes,
            angular_nodes,
            includes_center: false,
        })
    }

    pub fn disc(r_out: f64, radial_nodes: usize, angular_nodes: usize) -> Result<Self, GridError> {
        if !(r_out > 0.0 && r_out.is_finite()) {
            return Err(GridError::InvalidExtent { r_in: 0.0, r_out });
        }
        Self::validate(radial_nodes, angular_nodes)?;
        Ok(Self {
            r_in: 0.0,
            r_out,
            radial_nodes,
            angular_nodes,
            includes_center: true,
        })
    }

    fn validate(radial_nodes: usize, angular_nodes: usize) -> Result<(), GridError> {
        if radial_nodes < 3 {
            return Err(GridError::TooFewRadialNodes(radial_nodes));
        }
        if angular_nodes < 8 || angular_nodes % 2 != 0 {
            return Err(GridError::BadAngularNodes(angular_nodes));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        (self.r_out - self.r_in) / (self.radial_nodes - 1) as f64
    }

    pub fn dtheta(&self) -> f64 {
        std::f64::consts::TAU / self.angular_nodes as f64
    }

    pub fn ring_radius(&self, ring: usize) -> f64 {
        self.r_in + self.h() * ring as f64
    }

    pub fn node_count(&self) -> usize {
        if self.includes_center {
            1 + (self.radial_nodes - 1) * self.angular_nodes
        } else {
            self.radial_nodes * self.angular_nodes
        }
    }

    /// Flattened index of (ring, angular); ring 0 of a disc is the center
    /// regardless of the angular index.
    pub fn index(&self, ring: usize, j: usize) -> usize {
        if self.includes_center {
            if ring == 0 {
                0
            } else {
                1 + (ring - 1) * self.angular_nodes + (j % self.angular_nodes)
            }
        } else {
            ring * self.angular_nodes + (j % self.angular_nodes)
        }
    }

    pub fn ring_of(&self, idx: usize) -> usize {
        if self.includes_center {
            if idx == 0 {
                0
            } else {
                1 + (idx - 1) / self.angular_nodes
            }
        } else {
            idx / self.angular_nodes
        }
    }

    pub fn angular_of(&self, idx: usize) -> usize {
        if self.includes_center {
            if idx == 0 {
                0
            } else {
                (idx - 1) % self.angular_nodes
            }
        } else {
            idx % self.angular_nodes
        }
    }

    pub fn position(&self, idx: usize) -> [f64; 2] {
        let ring = self.ring_of(idx);
        let r = self.ring_radius(ring);
        let th = self.dtheta() * self.angular_of(idx) as f64;
        [r * th.cos(), r * th.sin()]
    }

    /// Dirichlet nodes: outer ring always, inner ring for annuli.
    pub fn is_boundary(&self, idx: usize) -> bool {
        let ring = self.ring_of(idx);
        ring + 1 == self.radial_nodes || (!self.includes_center && ring == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Grid {
    Radial(RadialGrid),
    Polar(PolarGrid),
}

impl Grid {
    pub fn node_count(&self) -> usize {
        match self {
            Grid::Radial(g) => g.nodes,
            Grid::Polar(g) => g.node_count(),
        }
    }

    pub fn r_out(&self) -> f64 {
        match self {
            Grid::Radial(g) => g.r_out,
            Grid::Polar(g) => g.r_out,
        }
    }

    pub fn r_in(&self) -> f64 {
        match self {
            Grid::Radial(g) => g.r_in,
            Grid::Polar(g) => g.r_in,
        }
    }
}

/// Per-sphere summary used by the asymptotic diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SphereStats {
    pub r: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sup_abs: f64,
}

/// Scalar field on a grid; the discrete stand-in for solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.node_count() {
            return Err(GridError::ValueCountMismatch {
                expected: grid.node_count(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFiniteValue(i));
        }
        Ok(Self { grid, values })
    }

    pub fn sample_radial(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.nodes).map(|i| f(grid.radius(i))).collect();
        Self::new(Grid::Radial(grid), values)
    }

    pub fn sample_polar(grid: PolarGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        let values = (0..grid.node_count())
            .map(|idx| {
                let [x, y] = grid.position(idx);
                f(x, y)
            })
            .collect();
        Self::new(Grid::Polar(grid), values)
    }

    /// Values sampled on the circle of radius `r`: one value per angular node
    /// for polar grids (radial interpolation between rings), a single value
    /// for radial grids. Uses cubic interpolation in the radius.
    pub fn sphere_samples(&self, r: f64) -> Result<Vec<f64>, GridError> {
        match &self.grid {
            Grid::Radial(g) => {
                if r < g.r_in - 1e-12 || r > g.r_out + 1e-12 {
                    return Err(GridError::RadiusOutOfRange {
                        r,
                        r_in: g.r_in,
                        r_out: g.r_out,
                    });
                }
                let t = (r - g.r_in) / g.h();
                Ok(vec![interp::cubic_sample(&self.values, t)])
            }
            Grid::Polar(g) => {
                if r < g.r_in - 1e-12 || r > g.r_out + 1e-12 {
                    return Err(GridError::RadiusOutOfRange {
                        r,
                        r_in: g.r_in,
                        r_out: g.r_out,
                    });
                }
                let t = (r - g.r_in) / g.h();
                let mut out = Vec::with_capacity(g.angular_nodes);
                for j in 0..g.angular_nodes {
                    let column: Vec<f64> = (0..g.radial_nodes)
                        .map(|ring| self.values[g.index(ring, j)])
                        .collect();
                    out.push(interp::cubic_sample(&column, t));
                }
                Ok(out)
            }
        }
    }

    pub fn sphere_stats(&self, r: f64) -> Result<SphereStats, GridError> {
        let samples = self.sphere_samples(r)?;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut sup = 0.0f64;
        for &v in &samples {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            sup = sup.max(v.abs());
        }
        Ok(SphereStats {
            r,
            min,
            max,
            mean: sum / samples.len() as f64,
            sup_abs: sup,
        })
    }

    /// The ring index of a polar grid (or node index of a radial grid)
    /// closest to radius `r`.
    pub fn nearest_ring(&self, r: f64) -> usize {
        match &self.grid {
            Grid::Radial(g) => {
                (((r - g.r_in) / g.h()).round() as usize).min(g.nodes - 1)
            }
            Grid::Polar(g) => {
                (((r - g.r_in) / g.h()).round() as usize).min(g.radial_nodes - 1)
            }
        }
    }

    /// Columnar CSV: `r,value` for radial grids, `x,y,value` for polar ones.
    pub fn write_csv(&self, mut w: impl Write) -> Result<(), GridError> {
        match &self.grid {
            Grid::Radial(g) => {
                writeln!(w, "# pucci-lab grid-function v1 radial r_in={} r_out={}", g.r_in, g.r_out)?;
                writeln!(w, "r,value")?;
                for (i, v) in self.values.iter().enumerate() {
                    writeln!(w, "{:.17e},{:.17e}", g.radius(i), v)?;
                }
            }
            Grid::Polar(g) => {
                writeln!(
                    w,
                    "# pucci-lab grid-function v1 polar r_in={} r_out={} nr={} ntheta={}",
                    g.r_in, g.r_out, g.radial_nodes, g.angular_nodes
                )?;
                writeln!(w, "x,y,value")?;
                for (idx, v) in self.values.iter().enumerate() {
                    let [x, y] = g.position(idx);
                    writeln!(w, "{:.17e},{:.17e},{:.17e}", x, y, v)?;
                }
            }
        }
        Ok(())
    }

    /// Reads back the values of a CSV emitted by [`Self::write_csv`] for the
    /// given grid. Coordinates in the file are ignored; the value column is
    /// taken in node order.
    pub fn read_csv_values(grid: Grid, r: impl BufRead) -> Result<Self, GridError> {
        let mut values = Vec::new();
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || t.ends_with("value") {
                continue;
            }
            let last = t
                .rsplit(',')
                .next()
                .ok_or_else(|| GridError::Csv(format!("bad row: {t}")))?;
            let v: f64 = last
                .parse()
                .map_err(|e| GridError::Csv(format!("bad value {last}: {e}")))?;
            values.push(v);
        }
        Self::new(grid, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn disc_indexing_roundtrip() {
        let g = PolarGrid::disc(4.0, 9, 16).unwrap();
        assert_eq!(g.node_count(), 1 + 8 * 16);
        assert_eq!(g.index(0, 5), 0);
        for ring in 1..9 {
            for j in 0..16 {
                let idx = g.index(ring, j);
                assert_eq!(g.ring_of(idx), ring);
                assert_eq!(g.angular_of(idx), j);
            }
        }
        assert!(g.is_boundary(g.index(8, 3)));
        assert!(!g.is_boundary(0));
    }

    #[test]
    fn annulus_boundary_rings() {
        let g = PolarGrid::annulus(1.0, 4.0, 7, 8).unwrap();
        assert!(g.is_boundary(g.index(0, 2)));
        assert!(g.is_boundary(g.index(6, 2)));
        assert!(!g.is_boundary(g.index(3, 2)));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(PolarGrid::annulus(0.0, 4.0, 7, 8).is_err());
        assert!(PolarGrid::annulus(1.0, 4.0, 7, 7).is_err());
        assert!(PolarGrid::annulus(1.0, 4.0, 7, 6).is_err());
        assert!(RadialGrid::new(2.0, 1.0, 9).is_err());
    }

    #[test]
    fn sphere_samples_on_ring_are_exact() {
        let g = PolarGrid::annulus(1.0, 5.0, 9, 8).unwrap();
        let u = GridFunction::sample_polar(g, |x, y| x + 2.0 * y).unwrap();
        let s = u.sphere_samples(2.0).unwrap();
        for (j, v) in s.iter().enumerate() {
            let th = g.dtheta() * j as f64;
            assert_abs_diff_eq!(*v, 2.0 * th.cos() + 4.0 * th.sin(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = RadialGrid::new(1.0, 2.0, 5).unwrap();
        let r = GridFunction::new(Grid::Radial(g), vec![0.0, 1.0, f64::NAN, 0.0, 0.0]);
        assert!(r.is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let g = PolarGrid::annulus(1.0, 3.0, 5, 8).unwrap();
        let u = GridFunction::sample_polar(g, |x, y| x * y + 0.25).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let back =
            GridFunction::read_csv_values(Grid::Polar(g), std::io::Cursor::new(buf)).unwrap();
        assert_eq!(u, back);
    }
}
