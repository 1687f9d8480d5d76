//! Evolution driver, per-step monitors and their invariant checks.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{thermal_state, Propagator, ReducedPropagator, SectorState, DEFAULT_STABILITY, DEFAULT_STEP_FRACTION};
use crate::error::{invalid, Error, Result};
use crate::grid::Cell;
use crate::kernels::KernelTable;
use crate::physics::TracerSpec;

/// Thresholds of the per-step invariant checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorTolerances {
    /// |trace - initial trace| of the diagonal sector.
    pub trace: f64,
    /// Allowed per-step growth of a Δ ≠ 0 sector's L1 norm.
    pub l1_growth: f64,
    /// Allowed per-step growth of the relative entropy.
    pub entropy_increase: f64,
    /// Most negative admissible diagonal value.
    pub negativity: f64,
    /// Most negative admissible eigenvalue of a 2×2 minor.
    pub positivity: f64,
}

impl Default for MonitorTolerances {
    fn default() -> Self {
        MonitorTolerances { trace: 1e-12, l1_growth: 1e-10, entropy_increase: 1e-8, negativity: 1e-12, positivity: 1e-10 }
    }
}

/// Settings of one evolution run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveSpec {
    pub t_final: f64,
    /// Requested step; the default is 0.05 / max M_out. The run uses the
    /// largest step not above it that divides `t_final` evenly.
    pub dt: Option<f64>,
    /// RK4 stability factor in dt ≤ factor / max M_out.
    pub stability: f64,
    pub tolerances: MonitorTolerances,
    /// Record violations as warnings instead of stopping.
    pub warn_only: bool,
    /// Gas temperature; enables the relative-entropy monitor.
    pub temperature: Option<f64>,
    /// Integrate a lone cubic-symmetric diagonal sector on orbit values.
    pub symmetry_reduction: bool,
}

impl EvolveSpec {
    pub fn new(t_final: f64) -> Self {
        EvolveSpec {
            t_final,
            dt: None,
            stability: DEFAULT_STABILITY,
            tolerances: MonitorTolerances::default(),
            warn_only: false,
            temperature: None,
            symmetry_reduction: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorNorm {
    pub delta: Cell,
    pub l1: f64,
    pub l2: f64,
}

/// Monitor values after one step (step 0 is the initial state).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub step: usize,
    pub time: f64,
    pub trace: Option<f64>,
    pub energy: Option<f64>,
    pub mean_modulus: Option<f64>,
    pub entropy: Option<f64>,
    /// Cumulative probability of suppressed jumps beyond the grid.
    pub leakage: f64,
    pub min_diagonal: Option<f64>,
    pub min_minor: Option<f64>,
    pub norms: Vec<SectorNorm>,
}

/// Exponential fit of a sector's L1 norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub delta: Cell,
    pub rate: f64,
    /// Largest relative deviation of the norm from the fitted exponential.
    pub residual: f64,
}

/// Result of [`evolve`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub steps: usize,
    pub records: Vec<MonitorRecord>,
    pub final_states: Vec<SectorState>,
    pub warnings: Vec<String>,
    /// First violation, if the run stopped on one.
    pub violation: Option<String>,
    /// True when the run used the cubic orbit reduction.
    pub reduced: bool,
}

impl Trajectory {
    pub fn into_result(self) -> Result<Trajectory> {
        match &self.violation {
            Some(v) => Err(Error::InvariantViolation(v.clone())),
            None => Ok(self),
        }
    }

    pub fn last(&self) -> &MonitorRecord {
        self.records.last().expect("a trajectory holds at least the initial record")
    }

    pub fn decay_fits(&self) -> Vec<DecayFit> {
        let Some(first) = self.records.first() else { return Vec::new() };
        first
            .norms
            .iter()
            .enumerate()
            .filter(|(_, n)| n.delta != [0, 0, 0])
            .filter_map(|(k, n)| {
                let t: Vec<f64> = self.records.iter().map(|r| r.time).collect();
                let y: Vec<f64> = self.records.iter().map(|r| r.norms[k].l1).collect();
                fit_decay_rate(&t, &y).map(|(rate, residual)| DecayFit { delta: n.delta, rate, residual })
            })
            .collect()
    }
}

/// Least-squares fit of ln y = c - γ t; returns (γ, max |y/fit - 1|).
pub fn fit_decay_rate(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, &y)| y > 0.0).map(|(&t, &y)| (t, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let c = my - slope * mt;
    let residual = pts.iter().map(|p| ((c + slope * p.0 - p.1).exp() - 1.0).abs()).fold(0.0, f64::max);
    Some((-slope, residual))
}

/// Σ w ln(w / w_st) ΔV with 0 ln 0 = 0.
pub fn entropy_monitor(w: &SectorState, stationary: &SectorState) -> Result<f64> {
    entropy_with(w, stationary, MonitorTolerances::default().negativity)
}

fn entropy_with(w: &SectorState, st: &SectorState, negativity: f64) -> Result<f64> {
    if !w.is_diagonal() || !st.is_diagonal() {
        return Err(invalid("relative entropy needs diagonal sectors"));
    }
    if w.grid() != st.grid() {
        return Err(Error::Mismatch("entropy arguments live on different grids".into()));
    }
    let mut s = 0.0;
    for (i, (a, b)) in w.values().iter().zip(st.values()).enumerate() {
        let (a, b) = (a.re, b.re);
        if a < -negativity {
            return Err(Error::InvariantViolation(format!("negative probability {a:e} at node {i}")));
        }
        if a <= 0.0 {
            continue;
        }
        if !(b > 0.0) {
            return Err(invalid(format!("stationary state vanishes at node {i}")));
        }
        s += a * (a / b).ln();
    }
    Ok(s * w.grid().cell_volume())
}

/// Smallest eigenvalues of the minors [[w(P), ρ_Δ(P)], [ρ_Δ(P)*, w(P - Δ)]].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub min_eigenvalue: f64,
    pub pairs: usize,
    /// Offset and node of the smallest eigenvalue.
    pub worst: Option<(Cell, usize)>,
}

/// Checks every pair (P, P - Δ) of every off-diagonal sector against the
/// diagonal sector.
pub fn two_point_positivity(diagonal: &SectorState, sectors: &[SectorState]) -> Result<PositivityReport> {
    if !diagonal.is_diagonal() {
        return Err(invalid("first argument must be the diagonal sector"));
    }
    let grid = diagonal.grid();
    let w = diagonal.values();
    let mut rep = PositivityReport { min_eigenvalue: f64::INFINITY, pairs: 0, worst: None };
    for s in sectors.iter().filter(|s| !s.is_diagonal()) {
        if s.grid() != grid {
            return Err(Error::Mismatch("sectors live on different grids".into()));
        }
        let d = s.delta();
        for (i, z) in s.values().iter().enumerate() {
            let c = grid.cell(i);
            let Some(j) = grid.index([c[0] - d[0], c[1] - d[1], c[2] - d[2]]) else { continue };
            let lam = min_eigenvalue(w[i].re, w[j].re, *z);
            rep.pairs += 1;
            if lam < rep.min_eigenvalue {
                rep.min_eigenvalue = lam;
                rep.worst = Some((d, i));
            }
        }
    }
    Ok(rep)
}

fn min_eigenvalue(a: f64, b: f64, z: Complex64) -> f64 {
    let m = 0.5 * (a + b);
    let h = 0.5 * (a - b);
    m - (h * h + z.norm_sqr()).sqrt()
}

/// Evolves every sector to `spec.t_final`, recording monitors after each
/// step and stopping at the first violated invariant unless
/// `spec.warn_only` is set.
pub fn evolve(
    initial: Vec<SectorState>,
    tables: &[Arc<KernelTable>],
    tracer: &TracerSpec,
    spec: &EvolveSpec,
) -> Result<Trajectory> {
    if initial.is_empty() {
        return Err(invalid("evolve needs at least one sector"));
    }
    if !(spec.t_final >= 0.0 && spec.t_final.is_finite()) {
        return Err(invalid(format!("t_final must be non-negative, got {}", spec.t_final)));
    }
    let grid = *initial[0].grid();
    let mut props = Vec::with_capacity(initial.len());
    for s in &initial {
        if s.grid() != &grid {
            return Err(Error::Mismatch("all sectors must share one grid".into()));
        }
        let t = tables
            .iter()
            .find(|t| t.delta() == s.delta())
            .ok_or_else(|| Error::Mismatch(format!("no table for offset {:?}", s.delta())))?;
        props.push(Propagator::new(t.clone(), *tracer).with_stability(spec.stability));
    }
    let max_out = props.iter().map(|p| p.table().max_m_out()).fold(0.0, f64::max);
    let dt_max = props.iter().map(|p| p.dt_max()).fold(f64::INFINITY, f64::min);
    let requested = match spec.dt {
        Some(dt) => dt,
        None if max_out > 0.0 => DEFAULT_STEP_FRACTION / max_out,
        None => spec.t_final.max(f64::MIN_POSITIVE) / 100.0,
    };
    if !(requested > 0.0) || requested > dt_max * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt: requested, bound: dt_max });
    }
    let steps = if spec.t_final == 0.0 { 0 } else { (spec.t_final / requested * (1.0 - 1e-12)).ceil() as usize };
    let dt = if steps == 0 { requested } else { spec.t_final / steps as f64 };

    let stationary = match spec.temperature {
        Some(t) if !tracer.is_infinite() && initial.iter().any(|s| s.is_diagonal()) => {
            Some(thermal_state(grid, tracer, t)?)
        }
        _ => None,
    };
    let tol = spec.tolerances;
    let mut states = initial;
    let diag_at = states.iter().position(|s| s.is_diagonal());
    let trace0 = diag_at.map(|k| states[k].trace());
    let mut leakage = 0.0;
    let mut records = Vec::with_capacity(steps + 1);
    let mut warnings = Vec::new();
    let mut violation = None;

    let record = |step: usize, states: &[SectorState], leakage: f64| -> Result<MonitorRecord> {
        let diag = diag_at.map(|k| &states[k]);
        let entropy = match (diag, &stationary) {
            (Some(w), Some(st)) => Some(entropy_with(w, st, f64::INFINITY)?),
            _ => None,
        };
        let min_minor = match diag {
            Some(w) if states.len() > 1 => Some(two_point_positivity(w, states)?.min_eigenvalue),
            _ => None,
        };
        Ok(MonitorRecord {
            step,
            time: states[0].time(),
            trace: diag.map(|w| w.trace()),
            energy: diag.map(|w| w.energy(tracer)),
            mean_modulus: diag.map(|w| w.mean_modulus()),
            entropy,
            leakage,
            min_diagonal: diag.map(|w| w.values().iter().map(|v| v.re).fold(f64::INFINITY, f64::min)),
            min_minor,
            norms: states.iter().map(|s| SectorNorm { delta: s.delta(), l1: s.l1_norm(), l2: s.l2_norm() }).collect(),
        })
    };

    let mut reduced = None;
    if spec.symmetry_reduction && states.len() == 1 && states[0].is_diagonal() {
        let rp = ReducedPropagator::with_stability(props[0].table(), spec.stability)?;
        if rp.reduction().is_symmetric(&states[0]) {
            let r = rp.reduction().reduce(&states[0])?;
            reduced = Some((rp, r));
        }
    }

    records.push(record(0, &states, leakage)?);
    for step in 1..=steps {
        match reduced.as_mut() {
            Some((rp, r)) => {
                leakage += rp.leak_flux(r, grid.cell_volume()) * dt;
                rp.step(r, dt)?;
                let t = states[0].time() + dt;
                rp.reduction().expand_into(r, &mut states[0]);
                states[0].set_time(t);
            }
            None => {
                if let Some(k) = diag_at {
                    leakage += props[k].leak_flux(&states[k]) * dt;
                }
                for (s, p) in states.iter_mut().zip(&props) {
                    p.step(s, dt)?;
                }
            }
        }
        let rec = record(step, &states, leakage)?;
        let prev = records.last().expect("initial record");
        let mut problems = check(prev, &rec, trace0, &tol);
        if let Some(k) = diag_at {
            if let Some(v) = rec.min_diagonal {
                if v < -tol.negativity {
                    problems.push(format!("negative probability {v:e} in sector {:?}", states[k].delta()));
                }
            }
        }
        records.push(rec);
        if !problems.is_empty() {
            let msg = format!("step {step} (t = {:.6e}): {}", step as f64 * dt, problems.join("; "));
            if spec.warn_only {
                warnings.push(msg);
            } else {
                violation = Some(msg);
                break;
            }
        }
    }
    Ok(Trajectory { dt, steps, records, final_states: states, warnings, violation, reduced: reduced.is_some() })
}

fn check(prev: &MonitorRecord, cur: &MonitorRecord, trace0: Option<f64>, tol: &MonitorTolerances) -> Vec<String> {
    let mut out = Vec::new();
    if let (Some(t), Some(t0)) = (cur.trace, trace0) {
        if (t - t0).abs() > tol.trace {
            out.push(format!("trace drift {:e}", t - t0));
        }
    }
    if let (Some(a), Some(b)) = (prev.entropy, cur.entropy) {
        if b > a + tol.entropy_increase {
            out.push(format!("relative entropy increased by {:e}", b - a));
        }
    }
    for (p, c) in prev.norms.iter().zip(&cur.norms) {
        if c.delta != [0, 0, 0] && c.l1 > p.l1 + tol.l1_growth {
            out.push(format!("L1 norm of sector {:?} grew by {:e}", c.delta, c.l1 - p.l1));
        }
    }
    if let Some(m) = cur.min_minor {
        if m < -tol.positivity {
            out.push(format!("2x2 minor eigenvalue {m:e}"));
        }
    }
    out
}
