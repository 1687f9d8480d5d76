//! Classical linear Boltzmann solvers for the diagonal sector.
//!
//! [`LbeStepper`] integrates the gain/loss equation for w(P) on the grid
//! with its own loops over the shared tables. [`dsmc`] realizes the same
//! jump process with particles.

pub mod dsmc;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

pub use dsmc::{
    dsmc_collide, dsmc_run, maxwell_z_scores, Collision, DsmcEngine, DsmcResult, DsmcSpec, Ensemble, MomentStat, ShellFlux,
    MIN_STATISTICAL_PARTICLES,
};

use crate::error::{Error, Result};
use crate::evolution::SectorState;
use crate::kernels::{KernelTable, TableValues};

/// RK4 stepper for ∂w(P) = Σ_Q M_in(P; Q) w(P - Q) ΔV - M_out(P) w(P).
pub struct LbeStepper {
    table: Arc<KernelTable>,
    values: Vec<f64>,
}

impl LbeStepper {
    pub fn new(table: Arc<KernelTable>) -> Result<Self> {
        if table.delta() != [0, 0, 0] {
            return Err(Error::Mismatch(format!("classical stepper needs the Δ = 0 table, got {:?}", table.delta())));
        }
        let values = match table.values() {
            TableValues::Real(v) => v.clone(),
            TableValues::Complex(v) => v.iter().map(|z| z.re).collect(),
        };
        Ok(LbeStepper { table, values })
    }

    pub fn table(&self) -> &Arc<KernelTable> {
        &self.table
    }

    /// Time derivative of w.
    pub fn derivative(&self, w: &[f64]) -> Vec<f64> {
        let grid = self.table.grid();
        let vectors = self.table.lattice().vectors();
        let nq = vectors.len();
        let dv = grid.cell_volume();
        let m_out = self.table.m_out();
        let w0 = self.table.self_rate();
        (0..grid.len())
            .into_par_iter()
            .map(|p| {
                let c = grid.cell(p);
                let row = &self.values[p * nq..(p + 1) * nq];
                let mut gain = 0.0;
                for (t, j) in row.iter().zip(vectors) {
                    if let Some(src) = grid.index([c[0] - j[0], c[1] - j[1], c[2] - j[2]]) {
                        gain += t * w[src];
                    }
                }
                gain * dv + (w0[p].re - m_out[p]) * w[p]
            })
            .collect()
    }

    /// One RK4 step of length `dt`.
    pub fn step(&self, w: &SectorState, dt: f64) -> Result<SectorState> {
        if w.grid() != self.table.grid() {
            return Err(Error::Mismatch("state and table grids differ".into()));
        }
        if !w.is_diagonal() {
            return Err(Error::Mismatch(format!("classical stepper needs a Δ = 0 state, got {:?}", w.delta())));
        }
        let x: Vec<f64> = w.values().iter().map(|v| v.re).collect();
        let axpy = |k: &[f64], s: f64| x.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
        let k1 = self.derivative(&x);
        let k2 = self.derivative(&axpy(&k1, 0.5 * dt));
        let k3 = self.derivative(&axpy(&k2, 0.5 * dt));
        let k4 = self.derivative(&axpy(&k3, dt));
        let values = (0..x.len())
            .map(|i| Complex64::new(x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]), 0.0))
            .collect();
        let mut out = SectorState::from_values(*w.grid(), [0, 0, 0], values)?;
        out.set_time(w.time() + dt);
        Ok(out)
    }
}

/// One RK4 step of the classical equation with the Δ = 0 table.
pub fn lbe_step(w: &SectorState, table: &Arc<KernelTable>, dt: f64) -> Result<SectorState> {
    LbeStepper::new(table.clone())?.step(w, dt)
}
