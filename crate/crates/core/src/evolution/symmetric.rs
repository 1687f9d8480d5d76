//! Exact reduction of the diagonal sector to orbits of the cubic group.
//!
//! The grid, the transfer lattice and every shipped kernel are invariant
//! under the 48 signed permutations of the axes, so a diagonal state with
//! that symmetry keeps it. Such a state is carried by one value per orbit
//! and the generator by a dense orbit-to-orbit matrix assembled from the
//! representative rows of the table.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;

use super::{SectorState, DEFAULT_STABILITY};
use crate::error::{invalid, Error, Result};
use crate::grid::MomentumGrid;
use crate::kernels::{KernelTable, TableValues};

/// Orbits of grid nodes under signed axis permutations.
#[derive(Clone, Debug)]
pub struct CubicReduction {
    grid: MomentumGrid,
    reps: Vec<usize>,
    orbit: Vec<u32>,
    sizes: Vec<f64>,
}

impl CubicReduction {
    pub fn new(grid: MomentumGrid) -> Self {
        let mut ids: HashMap<[i32; 3], u32> = HashMap::new();
        let mut reps = Vec::new();
        let mut sizes = Vec::new();
        let mut orbit = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let c = grid.cell(i);
            let mut key = [c[0].abs(), c[1].abs(), c[2].abs()];
            key.sort_unstable();
            let id = *ids.entry(key).or_insert_with(|| {
                reps.push(grid.index(key).expect("sorted absolute coordinates stay on the grid"));
                sizes.push(0.0);
                (reps.len() - 1) as u32
            });
            sizes[id as usize] += 1.0;
            orbit.push(id);
        }
        CubicReduction { grid, reps, orbit, sizes }
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    /// True when the diagonal state takes one value per orbit exactly.
    pub fn is_symmetric(&self, s: &SectorState) -> bool {
        s.is_diagonal()
            && s.grid() == &self.grid
            && s.values().iter().enumerate().all(|(i, v)| v.im == 0.0 && *v == s.values()[self.reps[self.orbit[i] as usize]])
    }

    pub fn reduce(&self, s: &SectorState) -> Result<Vec<f64>> {
        if !self.is_symmetric(s) {
            return Err(invalid("state is not invariant under the cubic group"));
        }
        Ok(self.reps.iter().map(|&i| s.values()[i].re).collect())
    }

    /// Writes orbit values back onto every node of `s`.
    pub fn expand_into(&self, r: &[f64], s: &mut SectorState) {
        for (i, v) in s.values_mut().iter_mut().enumerate() {
            *v = Complex64::new(r[self.orbit[i] as usize], 0.0);
        }
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }
}

/// RK4 integrator of the diagonal sector on orbit values.
pub struct ReducedPropagator {
    reduction: CubicReduction,
    matrix: Vec<f64>,
    diag: Vec<f64>,
    leak: Vec<f64>,
    dt_max: f64,
}

impl ReducedPropagator {
    pub fn new(table: &Arc<KernelTable>) -> Result<Self> {
        ReducedPropagator::with_stability(table, DEFAULT_STABILITY)
    }

    pub fn with_stability(table: &Arc<KernelTable>, stability: f64) -> Result<Self> {
        if table.delta() != [0, 0, 0] {
            return Err(Error::Mismatch("orbit reduction applies to the diagonal sector only".into()));
        }
        let TableValues::Real(values) = table.values() else {
            return Err(Error::Mismatch("diagonal table must be real".into()));
        };
        let grid = *table.grid();
        let red = CubicReduction::new(grid);
        let nr = red.len();
        let nq = table.lattice().len();
        let dv = grid.cell_volume();
        let mut matrix = vec![0.0; nr * nr];
        for (o, &p) in red.reps.iter().enumerate() {
            let c = grid.cell(p);
            let row = &values[p * nq..(p + 1) * nq];
            for (q, j) in table.lattice().vectors().iter().enumerate() {
                if let Some(src) = grid.index([c[0] - j[0], c[1] - j[1], c[2] - j[2]]) {
                    matrix[o * nr + red.orbit[src] as usize] += row[q] * dv;
                }
            }
        }
        let diag = red.reps.iter().map(|&p| table.self_rate()[p].re - table.m_out()[p]).collect();
        let leak = red.reps.iter().map(|&p| table.leak_rate()[p]).collect();
        let m = table.max_m_out();
        let dt_max = if m > 0.0 { stability / m } else { f64::INFINITY };
        Ok(ReducedPropagator { reduction: red, matrix, diag, leak, dt_max })
    }

    pub fn reduction(&self) -> &CubicReduction {
        &self.reduction
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max
    }

    pub fn derivative(&self, r: &[f64]) -> Vec<f64> {
        let nr = r.len();
        (0..nr)
            .map(|o| {
                let row = &self.matrix[o * nr..(o + 1) * nr];
                row.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() + self.diag[o] * r[o]
            })
            .collect()
    }

    pub fn step(&self, r: &mut [f64], dt: f64) -> Result<()> {
        if !(dt > 0.0) || dt > self.dt_max * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, bound: self.dt_max });
        }
        let add = |a: &[f64], k: &[f64], s: f64| a.iter().zip(k).map(|(a, k)| a + s * k).collect::<Vec<_>>();
        let k1 = self.derivative(r);
        let k2 = self.derivative(&add(r, &k1, 0.5 * dt));
        let k3 = self.derivative(&add(r, &k2, 0.5 * dt));
        let k4 = self.derivative(&add(r, &k3, dt));
        for i in 0..r.len() {
            r[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        Ok(())
    }

    /// Leak flux of the expanded state.
    pub fn leak_flux(&self, r: &[f64], cell_volume: f64) -> f64 {
        r.iter().zip(&self.leak).zip(&self.reduction.sizes).map(|((w, l), n)| w * l * n).sum::<f64>() * cell_volume
    }
}
