//! Time evolution of the tracer density matrix in momentum space.
//!
//! The collision generator conserves the offset Δ = P - P', so the state
//! is held as independent sectors ρ_Δ(P) = ρ(P, P - Δ). Each step applies
//! the exact free phase for dt/2, an RK4 collision substep, and another
//! free half-phase.
//!
//! The discrete generator for sector Δ is
//!
//! ```text
//! ∂ρ(P) = Σ_Q T(P, Q) ρ(P - Q) ΔV + [W0(P, P - Δ) - (M_out(P) + M_out(P - Δ))/2] ρ(P)
//! ```
//!
//! with T the tabulated M_in(P, P - Δ; Q) and W0 the zero-cell weight.
//! Jumps whose target would leave the grid are removed from both the gain
//! and the loss terms, which keeps the generator in Lindblad form and the
//! trace exactly conserved; their rate is accumulated as leakage.

mod monitors;
mod symmetric;

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use symmetric::{CubicReduction, ReducedPropagator};
pub use monitors::{
    entropy_monitor, evolve, fit_decay_rate, two_point_positivity, DecayFit, EvolveSpec, MonitorRecord, MonitorTolerances,
    PositivityReport, SectorNorm, Trajectory,
};

use crate::error::{invalid, Error, Result};
use crate::grid::{Cell, MomentumGrid};
use crate::kernels::{read_container, write_container, Container, ContainerKind, KernelTable, TableValues};
use crate::momentum::Momentum;
use crate::physics::TracerSpec;

/// Default RK4 stability factor: dt ≤ 0.1 / max M_out.
pub const DEFAULT_STABILITY: f64 = 0.1;
/// Default step as a fraction of 1 / max M_out.
pub const DEFAULT_STEP_FRACTION: f64 = 0.05;

/// The field ρ_Δ(P) = ρ(P, P - Δ) over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorState {
    grid: MomentumGrid,
    delta: Cell,
    values: Vec<Complex64>,
    time: f64,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    grid: MomentumGrid,
    delta: Cell,
    time: f64,
}

impl SectorState {
    pub fn zeros(grid: MomentumGrid, delta: Cell) -> Self {
        SectorState { grid, delta, values: vec![Complex64::new(0.0, 0.0); grid.len()], time: 0.0 }
    }

    /// Sector with ρ_Δ(P) = f(P, P - Δ) on its support and zero elsewhere.
    pub fn from_fn(grid: MomentumGrid, delta: Cell, f: impl Fn(Momentum, Momentum) -> Complex64) -> Self {
        let dp = grid.momentum(delta);
        let support = grid.sector_support(delta);
        let values = (0..grid.len())
            .map(|i| {
                if support[i] {
                    let p = grid.node(i);
                    f(p, p - dp)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        SectorState { grid, delta, values, time: 0.0 }
    }

    /// Sector from explicit node values; entries off the support must be 0.
    pub fn from_values(grid: MomentumGrid, delta: Cell, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Mismatch(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        let support = grid.sector_support(delta);
        if values.iter().zip(&support).any(|(v, &s)| !s && v.norm() != 0.0) {
            return Err(invalid("sector values must vanish where P - Δ leaves the grid"));
        }
        Ok(SectorState { grid, delta, values, time: 0.0 })
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn delta(&self) -> Cell {
        self.delta
    }

    pub fn is_diagonal(&self) -> bool {
        self.delta == [0, 0, 0]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    /// Σ Re ρ_Δ(P) ΔV; the trace for the diagonal sector.
    pub fn trace(&self) -> f64 {
        self.values.iter().map(|v| v.re).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// ⟨P²/2M⟩ of a diagonal sector.
    pub fn energy(&self, tracer: &TracerSpec) -> f64 {
        let dv = self.grid.cell_volume();
        (0..self.grid.len()).map(|i| self.values[i].re * tracer.kinetic_energy(&self.grid.node(i))).sum::<f64>() * dv
    }

    /// ⟨|P|⟩ of a diagonal sector.
    pub fn mean_modulus(&self) -> f64 {
        let dv = self.grid.cell_volume();
        (0..self.grid.len()).map(|i| self.values[i].re * self.grid.node(i).norm()).sum::<f64>() * dv
    }

    /// Scales the field so that the trace is one.
    pub fn normalize(&mut self) -> Result<()> {
        let t = self.trace();
        if !(t > 0.0) {
            return Err(invalid("cannot normalize a sector with non-positive trace"));
        }
        for v in &mut self.values {
            *v /= t;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = StateMeta { grid: self.grid, delta: self.delta, time: self.time };
        write_container(
            path,
            &Container {
                kind: ContainerKind::State,
                meta: serde_json::to_value(meta)?,
                blocks: vec![("rho".into(), self.values.clone())],
            },
        )
    }

    pub fn load(path: &Path) -> Result<SectorState> {
        let c = read_container(path)?;
        if c.kind != ContainerKind::State {
            return Err(Error::Format("container does not hold a sector state".into()));
        }
        let meta: StateMeta = serde_json::from_value(c.meta)?;
        let grid = MomentumGrid::new(meta.grid.n(), meta.grid.spacing())?;
        let values = c.blocks.into_iter().next().map(|b| b.1).unwrap_or_default();
        let mut s = SectorState::from_values(grid, meta.delta, values)?;
        s.time = meta.time;
        Ok(s)
    }
}

/// Normalized discrete Maxwell distribution of the tracer at `temperature`.
pub fn thermal_state(grid: MomentumGrid, tracer: &TracerSpec, temperature: f64) -> Result<SectorState> {
    if tracer.is_infinite() {
        return Err(invalid("an infinitely heavy tracer has no thermal momentum distribution"));
    }
    gaussian_state(grid, (tracer.mass * temperature).sqrt())
}

/// Normalized isotropic Gaussian w(P) ∝ exp(-P²/(2σ²)) with per-component
/// standard deviation `sigma`.
pub fn gaussian_state(grid: MomentumGrid, sigma: f64) -> Result<SectorState> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("Gaussian width must be positive, got {sigma}")));
    }
    let mut s = SectorState::from_fn(grid, [0, 0, 0], |p, _| Complex64::new((-p.norm2() / (2.0 * sigma * sigma)).exp(), 0.0));
    s.normalize()?;
    Ok(s)
}

/// Sectors ρ_Δ(P) = ψ(P) ψ*(P - Δ) of the pure state with node amplitudes
/// `psi`, normalized so that Σ |ψ|² ΔV = 1.
pub fn pure_state_sectors(grid: MomentumGrid, psi: &[Complex64], deltas: &[Cell]) -> Result<Vec<SectorState>> {
    if psi.len() != grid.len() {
        return Err(Error::Mismatch(format!("{} amplitudes for a grid of {} nodes", psi.len(), grid.len())));
    }
    let norm = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.cell_volume()).sqrt();
    if !(norm > 0.0) {
        return Err(invalid("pure state has zero norm"));
    }
    let psi: Vec<Complex64> = psi.iter().map(|z| z / norm).collect();
    Ok(deltas
        .iter()
        .map(|&d| {
            let mut s = SectorState::zeros(grid, d);
            for i in 0..grid.len() {
                let c = grid.cell(i);
                if let Some(j) = grid.index([c[0] - d[0], c[1] - d[1], c[2] - d[2]]) {
                    s.values[i] = psi[i] * psi[j].conj();
                }
            }
            s
        })
        .collect())
}

/// ρ_Δ(P) ← exp(-i [P² - (P - Δ)²] dt / 2M) ρ_Δ(P).
pub fn free_phase(state: &SectorState, dt: f64, tracer: &TracerSpec) -> SectorState {
    let mut out = state.clone();
    apply_phase(&mut out, &phase_rates(&state.grid, state.delta, tracer), dt);
    out
}

fn phase_rates(grid: &MomentumGrid, delta: Cell, tracer: &TracerSpec) -> Vec<f64> {
    let dp = grid.momentum(delta);
    (0..grid.len())
        .map(|i| {
            let p = grid.node(i);
            tracer.kinetic_energy(&p) - tracer.kinetic_energy(&(p - dp))
        })
        .collect()
}

fn apply_phase(state: &mut SectorState, rates: &[f64], dt: f64) {
    if state.is_diagonal() {
        return;
    }
    for (v, &w) in state.values.iter_mut().zip(rates) {
        if w != 0.0 {
            *v *= Complex64::from_polar(1.0, -w * dt);
        }
    }
}

/// Generator and integrator for one sector, built around a kernel table.
///
/// The source field is copied into a zero-padded box so that every run of
/// lattice vectors with common (j_x, j_y) reads a contiguous slice.
pub struct Propagator {
    table: Arc<KernelTable>,
    tracer: TracerSpec,
    support: Vec<bool>,
    diag: Vec<Complex64>,
    phase: Vec<f64>,
    pad: i32,
    dim: usize,
    offsets: Vec<(isize, usize, usize)>,
    stability: f64,
}

impl Propagator {
    pub fn new(table: Arc<KernelTable>, tracer: TracerSpec) -> Self {
        let grid = *table.grid();
        let delta = table.delta();
        let support = grid.sector_support(delta);
        let m_out = table.m_out();
        let w0 = table.self_rate();
        let diag = (0..grid.len())
            .map(|i| {
                if !support[i] {
                    return Complex64::new(0.0, 0.0);
                }
                let c = grid.cell(i);
                let j = grid.index([c[0] - delta[0], c[1] - delta[1], c[2] - delta[2]]).expect("support node");
                w0[i] - 0.5 * (m_out[i] + m_out[j])
            })
            .collect();
        let pad = table.lattice().reach();
        let dim = grid.n() + 2 * pad as usize;
        let d = dim as isize;
        let offsets = table
            .lattice()
            .runs()
            .iter()
            .map(|r| (-(r.jx as isize * d * d + r.jy as isize * d + r.jz_top as isize), r.len, r.start))
            .collect();
        Propagator {
            phase: phase_rates(&grid, delta, &tracer),
            table,
            tracer,
            support,
            diag,
            pad,
            dim,
            offsets,
            stability: DEFAULT_STABILITY,
        }
    }

    /// Replaces the stability factor in dt ≤ factor / max M_out.
    pub fn with_stability(mut self, factor: f64) -> Self {
        self.stability = factor;
        self
    }

    pub fn table(&self) -> &Arc<KernelTable> {
        &self.table
    }

    pub fn tracer(&self) -> &TracerSpec {
        &self.tracer
    }

    /// Largest admissible step.
    pub fn dt_max(&self) -> f64 {
        let m = self.table.max_m_out();
        if m > 0.0 {
            self.stability / m
        } else {
            f64::INFINITY
        }
    }

    fn check(&self, state: &SectorState) -> Result<()> {
        if state.delta != self.table.delta() {
            return Err(Error::Mismatch(format!(
                "state offset {:?} but table offset {:?}",
                state.delta,
                self.table.delta()
            )));
        }
        if &state.grid != self.table.grid() {
            return Err(Error::Mismatch("state and table live on different grids".into()));
        }
        Ok(())
    }

    fn padded_index(&self, c: Cell) -> usize {
        let h = self.table.grid().half() + self.pad;
        let d = self.dim;
        (((c[0] + h) as usize) * d + (c[1] + h) as usize) * d + (c[2] + h) as usize
    }

    /// Time derivative of the collision generator.
    pub fn derivative(&self, state: &SectorState) -> Result<Vec<Complex64>> {
        self.check(state)?;
        Ok(self.derivative_of(&state.values))
    }

    fn derivative_of(&self, field: &[Complex64]) -> Vec<Complex64> {
        let grid = self.table.grid();
        let dv = grid.cell_volume();
        let nq = self.table.lattice().len();
        let real_field = field.iter().all(|z| z.im == 0.0);
        let mut re = vec![0.0; self.dim.pow(3)];
        let mut im = if real_field { Vec::new() } else { vec![0.0; self.dim.pow(3)] };
        for (i, z) in field.iter().enumerate() {
            let k = self.padded_index(grid.cell(i));
            re[k] = z.re;
            if !real_field {
                im[k] = z.im;
            }
        }
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                if !self.support[i] {
                    return Complex64::new(0.0, 0.0);
                }
                let base = self.padded_index(grid.cell(i)) as isize;
                let gain = match self.table.values() {
                    TableValues::Real(t) => {
                        let row = &t[i * nq..(i + 1) * nq];
                        let mut a = 0.0;
                        let mut b = 0.0;
                        for &(off, len, start) in &self.offsets {
                            let s = (base + off) as usize;
                            let tr = &row[start..start + len];
                            a += dot(tr, &re[s..s + len]);
                            if !real_field {
                                b += dot(tr, &im[s..s + len]);
                            }
                        }
                        Complex64::new(a, b)
                    }
                    TableValues::Complex(t) => {
                        let row = &t[i * nq..(i + 1) * nq];
                        let mut acc = Complex64::new(0.0, 0.0);
                        for &(off, len, start) in &self.offsets {
                            let s = (base + off) as usize;
                            let tr = &row[start..start + len];
                            let (xr, yr) = dot_complex(tr, &re[s..s + len]);
                            acc += Complex64::new(xr, yr);
                            if !real_field {
                                let (xi, yi) = dot_complex(tr, &im[s..s + len]);
                                acc += Complex64::new(-yi, xi);
                            }
                        }
                        acc
                    }
                };
                gain * dv + self.diag[i] * field[i]
            })
            .collect()
    }

    /// One RK4 collision substep of length `dt`, in place.
    pub fn collide(&self, state: &mut SectorState, dt: f64) -> Result<()> {
        self.check(state)?;
        let y = &state.values;
        let k1 = self.derivative_of(y);
        let k2 = self.derivative_of(&axpy(y, &k1, 0.5 * dt));
        let k3 = self.derivative_of(&axpy(y, &k2, 0.5 * dt));
        let k4 = self.derivative_of(&axpy(y, &k3, dt));
        let c = dt / 6.0;
        for i in 0..y.len() {
            state.values[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * c;
        }
        if state.is_diagonal() {
            for v in &mut state.values {
                v.im = 0.0;
            }
        }
        Ok(())
    }

    /// Strang step: half free phase, RK4 collisions, half free phase.
    pub fn step(&self, state: &mut SectorState, dt: f64) -> Result<()> {
        self.check(state)?;
        let bound = self.dt_max();
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, bound });
        }
        apply_phase(state, &self.phase, 0.5 * dt);
        self.collide(state, dt)?;
        apply_phase(state, &self.phase, 0.5 * dt);
        state.time += dt;
        Ok(())
    }

    /// Probability per unit time carried to targets beyond the grid.
    pub fn leak_flux(&self, state: &SectorState) -> f64 {
        if !state.is_diagonal() {
            return 0.0;
        }
        let dv = state.grid.cell_volume();
        state.values.iter().zip(self.table.leak_rate()).map(|(w, r)| w.re * r).sum::<f64>() * dv
    }
}

fn axpy(y: &[Complex64], k: &[Complex64], a: f64) -> Vec<Complex64> {
    y.iter().zip(k).map(|(y, k)| y + k * a).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

fn dot_complex(a: &[Complex64], b: &[f64]) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for (z, &x) in a.iter().zip(b) {
        re += z.re * x;
        im += z.im * x;
    }
    (re, im)
}

/// ∂ρ_Δ of the collision generator.
pub fn apply_generator(state: &SectorState, table: &Arc<KernelTable>, tracer: &TracerSpec) -> Result<Vec<Complex64>> {
    Propagator::new(table.clone(), *tracer).derivative(state)
}

/// One Strang step with a freshly built propagator.
pub fn step(state: &SectorState, table: &Arc<KernelTable>, tracer: &TracerSpec, dt: f64) -> Result<SectorState> {
    let mut s = state.clone();
    Propagator::new(table.clone(), *tracer).step(&mut s, dt)?;
    Ok(s)
}
