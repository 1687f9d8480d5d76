//! Uniform Cartesian momentum grid and its lattice of transfer vectors.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::momentum::Momentum;

/// Integer lattice coordinates of a grid node or difference vector.
pub type Cell = [i32; 3];

/// An origin-centered grid of `n³` nodes with spacing `spacing`.
///
/// Node indices run over x slowest and z fastest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    n: usize,
    spacing: f64,
}

impl MomentumGrid {
    pub fn new(n: usize, spacing: f64) -> Result<Self> {
        if n < 3 || n % 2 == 0 {
            return Err(invalid(format!("grid points per axis must be odd and at least 3, got {n}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(invalid(format!("grid spacing must be positive, got {spacing}")));
        }
        Ok(MomentumGrid { n, spacing })
    }

    /// Grid whose outermost nodes sit at ±`half_extent` on each axis.
    pub fn with_extent(n: usize, half_extent: f64) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("grid points per axis must be odd and at least 3, got {n}")));
        }
        MomentumGrid::new(n, half_extent / ((n - 1) / 2) as f64)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Largest coordinate index, (n - 1) / 2.
    pub fn half(&self) -> i32 {
        ((self.n - 1) / 2) as i32
    }

    pub fn half_extent(&self) -> f64 {
        self.half() as f64 * self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: Cell) -> bool {
        let h = self.half();
        c.iter().all(|&v| v >= -h && v <= h)
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        if !self.contains(c) {
            return None;
        }
        let h = self.half();
        let n = self.n;
        Some((((c[0] + h) as usize) * n + (c[1] + h) as usize) * n + (c[2] + h) as usize)
    }

    pub fn cell(&self, idx: usize) -> Cell {
        let n = self.n;
        let h = self.half();
        [(idx / (n * n)) as i32 - h, ((idx / n) % n) as i32 - h, (idx % n) as i32 - h]
    }

    pub fn momentum(&self, c: Cell) -> Momentum {
        Momentum::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.spacing
    }

    pub fn node(&self, idx: usize) -> Momentum {
        self.momentum(self.cell(idx))
    }

    /// Requires the grid to hold `factor` thermal momenta of a particle
    /// with the given thermal momentum.
    pub fn check_extent(&self, thermal_momentum: f64, factor: f64) -> Result<()> {
        if self.half_extent() + 1e-12 < factor * thermal_momentum {
            return Err(invalid(format!(
                "grid half-extent {} is below {factor} x tracer thermal momentum {thermal_momentum}",
                self.half_extent()
            )));
        }
        Ok(())
    }

    /// Mask of nodes P with P and P - Δ both on the grid.
    pub fn sector_support(&self, delta: Cell) -> Vec<bool> {
        (0..self.len())
            .map(|i| {
                let c = self.cell(i);
                self.contains([c[0] - delta[0], c[1] - delta[1], c[2] - delta[2]])
            })
            .collect()
    }

    /// Nonzero difference vectors of modulus at most `q_max`
    /// (default: the half-extent).
    pub fn q_lattice(&self, q_max: Option<f64>) -> Result<QLattice> {
        QLattice::new(self, q_max.unwrap_or_else(|| self.half_extent()))
    }
}

/// A contiguous block of lattice vectors sharing (j_x, j_y), with j_z
/// descending from `jz_top`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Run {
    pub jx: i32,
    pub jy: i32,
    pub jz_top: i32,
    pub len: usize,
    pub start: usize,
}

/// The set of transfer vectors Q = j ΔP, closed under Q → -Q and never
/// containing Q = 0.
///
/// Ordering is j_x ascending, j_y ascending, j_z descending, so that the
/// sources P - Q of one run are consecutive grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct QLattice {
    q_max: f64,
    vectors: Vec<Cell>,
    runs: Vec<Run>,
    reach: i32,
}

impl QLattice {
    pub fn new(grid: &MomentumGrid, q_max: f64) -> Result<Self> {
        if !(q_max > 0.0 && q_max.is_finite()) {
            return Err(invalid(format!("q_max must be positive, got {q_max}")));
        }
        let span = grid.n as i32 - 1;
        let lim = (q_max / grid.spacing * (1.0 + 1e-12)).powi(2);
        let mut vectors = Vec::new();
        let mut runs: Vec<Run> = Vec::new();
        let mut reach = 0;
        for jx in -span..=span {
            for jy in -span..=span {
                let start = vectors.len();
                for jz in (-span..=span).rev() {
                    let j2 = (jx * jx + jy * jy + jz * jz) as f64;
                    if j2 == 0.0 || j2 > lim {
                        continue;
                    }
                    reach = reach.max(jx.abs()).max(jy.abs()).max(jz.abs());
                    vectors.push([jx, jy, jz]);
                }
                // The admissible j_z form one interval, possibly split by
                // the excluded origin.
                let mut i = start;
                while i < vectors.len() {
                    let top = vectors[i][2];
                    let mut len = 1;
                    while i + len < vectors.len() && vectors[i + len][2] == top - len as i32 {
                        len += 1;
                    }
                    runs.push(Run { jx, jy, jz_top: top, len, start: i });
                    i += len;
                }
            }
        }
        if vectors.is_empty() {
            return Err(invalid(format!("q_max {q_max} admits no lattice vector at spacing {}", grid.spacing)));
        }
        Ok(QLattice { q_max, vectors, runs, reach })
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Cell] {
        &self.vectors
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    /// Largest |j_k| over the lattice.
    pub fn reach(&self) -> i32 {
        self.reach
    }

    pub fn position(&self, j: Cell) -> Option<usize> {
        self.vectors.binary_search_by(|v| v[0].cmp(&j[0]).then(v[1].cmp(&j[1])).then(j[2].cmp(&v[2]))).ok()
    }
}
