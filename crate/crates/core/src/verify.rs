//! Acceptance suite: twelve property and limit checks at desk scale.
//!
//! Each criterion builds what it needs from a base configuration, measures
//! one number and compares it with its tolerance. Errors are reported as
//! failures rather than propagated, so a report always has one entry per
//! requested criterion.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::classical::{dsmc_run, DsmcEngine, DsmcSpec, Ensemble};
use crate::config::{RunConfig, Scenario};
use crate::distribution::stream_rng;
use crate::error::{invalid, Error, Result};
use crate::evolution::{evolve, EvolveSpec, MonitorTolerances, SectorState, Trajectory};
use crate::grid::{Cell, MomentumGrid};
use crate::kernels::{KernelBuilder, KernelEngine, KernelTable, Physics};
use crate::momentum::Momentum;
use crate::physics::{mean_collision_rate, TracerSpec};
use crate::scattering::{BornFormFactor, ConstantLength, HardSphere, ScatteringModel, ShellPoint};

/// Identifiers and names of the criteria, in execution order.
pub const CRITERIA: [(&str, &str); 12] = [
    ("AC-1", "trace conservation"),
    ("AC-2", "sector L1 contraction"),
    ("AC-3", "kernel Hermiticity and Cauchy-Schwarz"),
    ("AC-4", "diagonal equals classical rate density"),
    ("AC-5", "heavy-tracer limit"),
    ("AC-6", "Born amplitude depends on the transfer only"),
    ("AC-7", "thermalization and H-theorem"),
    ("AC-8", "total collision rate"),
    ("AC-9", "particle and grid relaxation agree"),
    ("AC-10", "splitting order"),
    ("AC-11", "optical theorem"),
    ("AC-12", "two-point positivity"),
];

/// Grid size of the kernel-heavy criteria.
pub const SMALL_N: usize = 13;
/// Grid size of the standard runs.
pub const STANDARD_N: usize = 21;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionReport {
    pub id: String,
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
    /// Wall time; left out of serialized reports to keep them reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub criteria: Vec<CriterionReport>,
    pub failures: usize,
}

struct Outcome {
    measured: f64,
    tolerance: f64,
    passed: bool,
    detail: String,
}

impl Outcome {
    /// Passes when `measured <= tolerance`.
    fn below(measured: f64, tolerance: f64, detail: String) -> Self {
        Outcome { measured, tolerance, passed: measured <= tolerance, detail }
    }
}

/// Normalizes "ac-3", "AC3" or "3" to "AC-3".
pub fn canonical_id(s: &str) -> Result<String> {
    let t = s.trim().to_ascii_uppercase();
    let num = t.trim_start_matches("AC").trim_start_matches('-');
    let id = format!("AC-{num}");
    if CRITERIA.iter().any(|(c, _)| *c == id) {
        Ok(id)
    } else {
        Err(invalid(format!("unknown criterion '{s}'")))
    }
}

/// Shared tables and runs of one suite execution.
pub struct Suite {
    base: RunConfig,
    tolerances: MonitorTolerances,
    builders: Mutex<HashMap<usize, Arc<KernelBuilder>>>,
    tables: Mutex<HashMap<(usize, Cell), Arc<KernelTable>>>,
    mixed: OnceLock<std::result::Result<Trajectory, String>>,
}

impl Suite {
    pub fn new(base: RunConfig) -> Self {
        let tolerances = base.tolerances();
        Suite { base, tolerances, builders: Mutex::default(), tables: Mutex::default(), mixed: OnceLock::new() }
    }

    /// Runs the selected criteria (all when `only` is empty).
    pub fn run(&self, only: &[String]) -> Result<VerifyReport> {
        let ids: Vec<String> = only.iter().map(|s| canonical_id(s)).collect::<Result<_>>()?;
        let mut criteria = Vec::new();
        for (id, name) in CRITERIA {
            if !ids.is_empty() && !ids.iter().any(|i| i == id) {
                continue;
            }
            criteria.push(self.criterion(id, name));
        }
        let failures = criteria.iter().filter(|c| !c.passed).count();
        Ok(VerifyReport { criteria, failures })
    }

    pub fn criterion(&self, id: &str, name: &str) -> CriterionReport {
        let start = Instant::now();
        let outcome = match id {
            "AC-1" => self.ac1(),
            "AC-2" => self.ac2(),
            "AC-3" => self.ac3(),
            "AC-4" => self.ac4(),
            "AC-5" => self.ac5(),
            "AC-6" => self.ac6(),
            "AC-7" => self.ac7(),
            "AC-8" => self.ac8(),
            "AC-9" => self.ac9(),
            "AC-10" => self.ac10(),
            "AC-11" => self.ac11(),
            "AC-12" => self.ac12(),
            _ => Err(invalid(format!("unknown criterion {id}"))),
        };
        let (measured, tolerance, passed, detail) = match outcome {
            Ok(o) => (o.measured, o.tolerance, o.passed && o.measured.is_finite(), o.detail),
            Err(e) => (f64::NAN, f64::NAN, false, format!("error: {e}")),
        };
        CriterionReport {
            id: id.to_string(),
            name: name.to_string(),
            measured,
            tolerance,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn config(&self, n: usize) -> RunConfig {
        let mut c = self.base.clone();
        c.grid.n = n;
        c
    }

    fn physics(&self) -> Result<Physics> {
        self.base.physics()
    }

    fn tracer(&self) -> Result<TracerSpec> {
        Ok(self.physics()?.tracer)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        stream_rng(self.base.seed, stream)
    }

    fn builder(&self, n: usize) -> Result<Arc<KernelBuilder>> {
        let mut b = self.builders.lock().expect("builder cache");
        if let Some(x) = b.get(&n) {
            return Ok(x.clone());
        }
        let c = self.config(n);
        let x = Arc::new(KernelBuilder::new(c.engine()?, c.grid()?, c.grid.q_max)?.with_max_bytes(c.kernel.max_table_bytes));
        b.insert(n, x.clone());
        Ok(x)
    }

    fn table(&self, n: usize, delta: Cell) -> Result<Arc<KernelTable>> {
        if let Some(t) = self.tables.lock().expect("table cache").get(&(n, delta)) {
            return Ok(t.clone());
        }
        let t = self.builder(n)?.table(delta)?;
        self.tables.lock().expect("table cache").insert((n, delta), t.clone());
        Ok(t)
    }

    fn cold_state(&self, grid: MomentumGrid) -> Result<SectorState> {
        let mut c = self.base.clone();
        c.grid.n = grid.n();
        c.scenario = Scenario::Cold { temperature_fraction: 0.1 };
        Ok(c.initial_states()?.remove(0))
    }

    fn spec(&self, t_final: f64) -> EvolveSpec {
        let mut s = EvolveSpec::new(t_final);
        s.tolerances = self.tolerances;
        s.warn_only = true;
        s.temperature = Some(self.base.physics.gas.temperature);
        s
    }

    fn rate(&self) -> Result<f64> {
        let p = self.physics()?;
        Ok(mean_collision_rate(Momentum::ZERO, &p.gas, &p.tracer, p.model.as_ref())?.value)
    }

    /// Mixed-sector pure-state run of 200 steps at the small grid.
    fn mixed_run(&self) -> Result<&Trajectory> {
        let r = self.mixed.get_or_init(|| {
            let go = || -> Result<Trajectory> {
                let mut c = self.config(SMALL_N);
                c.scenario = Scenario::Pure {
                    center: [1.0, 0.0, 0.0],
                    width: 0.5,
                    deltas: vec![[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0]],
                };
                let init = c.initial_states()?;
                let tables = init.iter().map(|s| self.table(SMALL_N, s.delta())).collect::<Result<Vec<_>>>()?;
                let m = tables.iter().map(|t| t.max_m_out()).fold(0.0, f64::max);
                let mut spec = self.spec(200.0 * crate::evolution::DEFAULT_STEP_FRACTION / m);
                spec.temperature = None;
                evolve(init, &tables, &self.tracer()?, &spec)
            };
            go().map_err(|e| e.to_string())
        });
        r.as_ref().map_err(|e| Error::InvariantViolation(e.clone()))
    }

    fn ac1(&self) -> Result<Outcome> {
        let table = self.table(STANDARD_N, [0, 0, 0])?;
        let s0 = self.cold_state(*table.grid())?;
        let mut spec = self.spec(200.0 * crate::evolution::DEFAULT_STEP_FRACTION / table.max_m_out());
        spec.symmetry_reduction = false;
        let traj = evolve(vec![s0], &[table], &self.tracer()?, &spec)?;
        let worst = traj.records.iter().filter_map(|r| r.trace).map(|t| (t - 1.0).abs()).fold(0.0, f64::max);
        let last = traj.last().trace.unwrap_or(f64::NAN);
        Ok(Outcome::below(
            worst,
            self.tolerances.trace,
            format!("{} steps of the full propagator; final trace - 1 = {:e}; leakage {:e}", traj.steps, last - 1.0, traj.last().leakage),
        ))
    }

    fn ac2(&self) -> Result<Outcome> {
        let traj = self.mixed_run()?;
        let mut worst = f64::NEG_INFINITY;
        for w in traj.records.windows(2) {
            for (a, b) in w[0].norms.iter().zip(&w[1].norms) {
                if a.delta != [0, 0, 0] {
                    worst = worst.max(b.l1 - a.l1);
                }
            }
        }
        let sectors = traj.last().norms.iter().filter(|n| n.delta != [0, 0, 0]).count();
        Ok(Outcome::below(
            worst,
            self.tolerances.l1_growth,
            format!("largest per-step L1 change over {} steps and {sectors} off-diagonal sectors", traj.steps),
        ))
    }

    fn ac3(&self) -> Result<Outcome> {
        let d0 = self.table(SMALL_N, [0, 0, 0])?;
        let mut total = PairScan::default();
        for delta in [[1, 0, 0], [0, 1, 1], [2, -1, 0]] {
            let plus = self.table(SMALL_N, delta)?;
            let minus = self.table(SMALL_N, [-delta[0], -delta[1], -delta[2]])?;
            total.merge(&scan_pair(&d0, &plus, Some(&minus))?);
        }
        let (herm, cs) = (total.hermiticity, total.cauchy_schwarz);
        let slack = 1e-12;
        Ok(Outcome {
            measured: herm.max(cs),
            tolerance: slack,
            passed: herm <= slack && cs <= slack,
            detail: format!(
                "{} entries at N = {SMALL_N}; Hermiticity {herm:e}, Cauchy-Schwarz excess {cs:e} (relative to the diagonal geometric mean)",
                total.entries
            ),
        })
    }

    fn ac4(&self) -> Result<Outcome> {
        let p = self.physics()?;
        let mut rng = self.rng(4);
        let models: Vec<Arc<dyn ScatteringModel>> = vec![p.model.clone(), Arc::new(HardSphere::new(0.5, None)?)];
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for model in models {
            let e = KernelEngine::new(Physics::new(p.gas.clone(), p.tracer, model), self.base.quadrature.clone())?;
            for _ in 0..100 {
                let big_p = random_in_box(&mut rng, 3.0);
                let q = random_direction(&mut rng) * rng.random_range(0.1..4.0);
                let a = e.m_in(big_p, big_p, q)?;
                let b = e.m_in_cl(big_p, q)?;
                worst = worst.max((a - b).norm() / b.abs());
                count += 1;
            }
        }
        Ok(Outcome::below(worst, 1e-8, format!("{count} random (P, Q): configured model and a hard sphere of radius 0.5")))
    }

    fn ac5(&self) -> Result<Outcome> {
        let p = self.physics()?;
        let model: Arc<dyn ScatteringModel> = Arc::new(ConstantLength::new(0.25)?);
        let q = Momentum::new(0.7, -0.4, 0.3);
        let d = Momentum::new(0.5, 0.2, -0.3);
        let mut rng = self.rng(5);
        let mids: Vec<Momentum> = (0..100).map(|_| random_in_box(&mut rng, 5.0)).collect();
        let spread = |ratio: f64| -> Result<f64> {
            let tracer = TracerSpec::from_ratio(ratio, &p.gas)?;
            let e = KernelEngine::new(Physics::new(p.gas.clone(), tracer, model.clone()), self.base.quadrature.clone())?;
            let vals: Vec<Complex64> = mids.iter().map(|x| e.m_in(*x + d * 0.5, *x - d * 0.5, q)).collect::<Result<_>>()?;
            let mean = vals.iter().sum::<Complex64>() / vals.len() as f64;
            Ok(vals.iter().map(|v| (v - mean).norm()).fold(0.0, f64::max) / mean.norm())
        };
        let heavy = spread(1e-4)?;
        let infinite = spread(0.0)?;
        let machine = 1e-14;
        Ok(Outcome {
            measured: heavy,
            tolerance: 0.01,
            passed: heavy <= 0.01 && infinite <= machine,
            detail: format!("100 midpoints in [-5, 5]^3; spread {heavy:e} at m/M = 1e-4, {infinite:e} at m/M = 0 (limit {machine:e})"),
        })
    }

    fn ac6(&self) -> Result<Outcome> {
        let p = self.physics()?;
        let model: Arc<dyn ScatteringModel> = Arc::new(BornFormFactor::gaussian(0.25, 0.5)?);
        let e = KernelEngine::new(Physics::new(p.gas.clone(), p.tracer, model), self.base.quadrature.clone())?;
        let mut rng = self.rng(6);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let q = random_direction(&mut rng) * rng.random_range(0.2..4.0);
            let f0 = e.eval_f_parts(Momentum::ZERO, Momentum::ZERO, q)?.amplitude;
            for _ in 0..1000 {
                let k = random_in_box(&mut rng, 3.0);
                let big_p = random_in_box(&mut rng, 3.0);
                let f = e.eval_f_parts(k, big_p, q)?.amplitude;
                worst = worst.max((f - f0).norm() / f0.norm());
            }
        }
        Ok(Outcome::below(worst, 1e-14, "Gaussian Born form factor, 10 transfers x 1000 (K, P)".into()))
    }

    fn ac7(&self) -> Result<Outcome> {
        let table = self.table(STANDARD_N, [0, 0, 0])?;
        let s0 = self.cold_state(*table.grid())?;
        let t_final = 30.0 / self.rate()?;
        let traj = evolve(vec![s0], &[table], &self.tracer()?, &self.spec(t_final))?;
        let target = 1.5 * self.base.physics.gas.temperature;
        let energy = traj.last().energy.unwrap_or(f64::NAN);
        let rel = (energy - target).abs() / target;
        let ent: Vec<f64> = traj.records.iter().filter_map(|r| r.entropy).collect();
        let rise = ent.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        let en: Vec<f64> = traj.records.iter().filter_map(|r| r.energy).collect();
        let drop = en.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
        let limit = self.tolerances.entropy_increase;
        Ok(Outcome {
            measured: rel,
            tolerance: 0.05,
            passed: rel <= 0.05 && rise <= limit,
            detail: format!(
                "{} steps to t = {t_final:.4} ({}); energy {energy:.6} vs {target}; largest entropy rise {rise:e} (limit {limit:e}); largest energy drop {drop:e}",
                traj.steps,
                if traj.reduced { "cubic orbit reduction" } else { "full propagator" }
            ),
        })
    }

    fn ac8(&self) -> Result<Outcome> {
        let p = self.physics()?;
        let length = if p.model.name() == "constant_length" {
            p.model.parameters()["length"].as_f64().unwrap_or(0.25)
        } else {
            0.25
        };
        let model: Arc<dyn ScatteringModel> = Arc::new(ConstantLength::new(length)?);
        let e = KernelEngine::new(Physics::new(p.gas.clone(), p.tracer, model), self.base.quadrature.clone())?;
        let closed = p.gas.number_density() * 4.0 * PI * length * length * 2.0 * p.gas.p_t() / (PI.sqrt() * p.gas.mass());
        let rel = |n: usize| -> Result<f64> {
            let c = self.config(n);
            Ok((e.m_out_cl(Momentum::ZERO, &c.grid()?, c.grid.q_max)? - closed).abs() / closed)
        };
        let (coarse, fine) = (rel(STANDARD_N)?, rel(31)?);
        Ok(Outcome {
            measured: coarse,
            tolerance: 0.02,
            passed: coarse <= 0.02 && fine <= 0.01 && fine < coarse,
            detail: format!("closed form {closed:.6}; relative deviation {coarse:e} at N = {STANDARD_N}, {fine:e} at N = 31"),
        })
    }

    fn ac9(&self) -> Result<Outcome> {
        let table = self.table(STANDARD_N, [0, 0, 0])?;
        let s0 = self.cold_state(*table.grid())?;
        let p = self.physics()?;
        let t_final = 30.0 / self.rate()?;
        let outputs = 60;
        let per = (t_final / outputs as f64 / (crate::evolution::DEFAULT_STEP_FRACTION / table.max_m_out())).ceil() as usize;
        let mut spec = self.spec(t_final);
        spec.dt = Some(t_final / (outputs * per) as f64);
        let traj = evolve(vec![s0.clone()], &[table], &p.tracer, &spec)?;
        let engine = DsmcEngine::new(p.gas.clone(), p.tracer, p.model.clone())?;
        let mut ens = Ensemble::from_grid(&s0, 100_000, self.base.seed)?;
        let scale = (2.0 * p.tracer.mass * p.gas.temperature()).sqrt();
        let mut ds = DsmcSpec::new(t_final, scale);
        ds.outputs = outputs;
        let r = dsmc_run(&engine, &mut ens, &ds)?;
        let mut worst: f64 = 0.0;
        for k in 0..=outputs {
            let rec = &traj.records[k * per];
            for (grid, stat) in [(rec.energy, r.energy[k]), (rec.mean_modulus, r.modulus[k])] {
                let g = grid.unwrap_or(f64::NAN);
                worst = worst.max((stat.mean - g).abs() / (0.02 * g.abs() + 3.0 * stat.std_error));
            }
        }
        Ok(Outcome::below(
            worst,
            1.0,
            format!(
                "{} particles, {} collisions over {outputs} intervals; largest |dsmc - grid| / (2% grid + 3 sigma)",
                r.particles, r.collisions
            ),
        ))
    }

    fn ac10(&self) -> Result<Outcome> {
        let mut c = self.config(SMALL_N);
        c.scenario = Scenario::Pure { center: [1.0, 0.0, 0.0], width: 0.5, deltas: vec![[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0]] };
        let init = c.initial_states()?;
        let tables = init.iter().map(|s| self.table(SMALL_N, s.delta())).collect::<Result<Vec<_>>>()?;
        let m = tables.iter().map(|t| t.max_m_out()).fold(0.0, f64::max);
        let dt = crate::evolution::DEFAULT_STABILITY / m;
        let tracer = self.tracer()?;
        let run = |h: f64| -> Result<Vec<SectorState>> {
            let mut spec = self.spec(40.0 * dt);
            spec.dt = Some(h);
            spec.temperature = None;
            Ok(evolve(init.clone(), &tables, &tracer, &spec)?.final_states)
        };
        let (a, b, cc) = (run(dt)?, run(dt / 2.0)?, run(dt / 4.0)?);
        let dist = |x: &[SectorState], y: &[SectorState]| {
            x.iter()
                .zip(y)
                .map(|(u, v)| u.values().iter().zip(v.values()).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        };
        let (d1, d2) = (dist(&a, &b), dist(&b, &cc));
        let ratio = d1 / d2;
        Ok(Outcome {
            measured: ratio,
            tolerance: 0.5,
            passed: (ratio - 4.0).abs() <= 0.5,
            detail: format!("4 sectors at N = {SMALL_N}, 40 steps of {dt:.4e} halved twice; differences {d1:e}, {d2:e}; passes when |ratio - 4| <= 0.5"),
        })
    }

    fn ac11(&self) -> Result<Outcome> {
        let hs = HardSphere::new(1.0, None)?;
        let mut worst: f64 = 0.0;
        let mut allowed_min = f64::INFINITY;
        let mut passed = true;
        let mut parts = Vec::new();
        for kr in [0.5, 1.0, 2.0] {
            let s = hs.sigma(kr)?;
            let optical = 4.0 * PI / kr * hs.amplitude_at(&ShellPoint::from_angle(kr, 1.0)).im;
            let rel = (s.value - optical).abs() / s.value;
            // Both sums share the truncation; rounding sets the floor.
            let allowed = s.relative_error().max(1e-13);
            passed &= rel <= allowed;
            worst = worst.max(rel);
            allowed_min = allowed_min.min(allowed);
            parts.push(format!("kR = {kr}: {rel:e} (allowed {allowed:e})"));
        }
        Ok(Outcome { measured: worst, tolerance: allowed_min, passed, detail: parts.join("; ") })
    }

    fn ac12(&self) -> Result<Outcome> {
        let traj = self.mixed_run()?;
        let min = traj.records.iter().filter_map(|r| r.min_minor).fold(f64::INFINITY, f64::min);
        let tol = self.tolerances.positivity;
        Ok(Outcome {
            measured: min,
            tolerance: -tol,
            passed: min >= -tol,
            detail: format!("smallest 2x2 minor eigenvalue over {} steps; passes when >= {:e}", traj.steps, -tol),
        })
    }
}

/// Largest relative deviations found by [`scan_pair`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PairScan {
    pub entries: usize,
    /// max |M(P, P'; Q) - M(P', P; Q)*| / √(M(P, P; Q) M(P', P'; Q)).
    pub hermiticity: f64,
    /// max |M(P, P'; Q)| / √(M(P, P; Q) M(P', P'; Q)) - 1.
    pub cauchy_schwarz: f64,
}

impl PairScan {
    pub fn merge(&mut self, o: &PairScan) {
        if self.entries == 0 {
            *self = *o;
            return;
        }
        self.entries += o.entries;
        self.hermiticity = self.hermiticity.max(o.hermiticity);
        self.cauchy_schwarz = self.cauchy_schwarz.max(o.cauchy_schwarz);
    }
}

/// Scans every entry of the table for Δ against the diagonal table and,
/// when given, the table for -Δ.
pub fn scan_pair(diagonal: &KernelTable, plus: &KernelTable, minus: Option<&KernelTable>) -> Result<PairScan> {
    let delta = plus.delta();
    if diagonal.delta() != [0, 0, 0] || diagonal.grid() != plus.grid() || diagonal.lattice().len() != plus.lattice().len() {
        return Err(Error::Mismatch("scan needs the diagonal table of the same grid".into()));
    }
    if let Some(m) = minus {
        if m.delta() != [-delta[0], -delta[1], -delta[2]] || m.grid() != plus.grid() {
            return Err(Error::Mismatch("second table must hold the opposite offset".into()));
        }
    }
    let grid = plus.grid();
    let nq = plus.lattice().len();
    let support = grid.sector_support(delta);
    let mut s = PairScan { entries: 0, hermiticity: 0.0, cauchy_schwarz: f64::NEG_INFINITY };
    for p in (0..grid.len()).filter(|&p| support[p]) {
        let c = grid.cell(p);
        let pp = grid.index([c[0] - delta[0], c[1] - delta[1], c[2] - delta[2]]).expect("support");
        for q in 0..nq {
            let a = plus.value(p, q);
            let b = minus.map(|m| m.value(pp, q).conj()).unwrap_or(a);
            let scale = (diagonal.value(p, q).re * diagonal.value(pp, q).re).sqrt();
            s.entries += 1;
            if scale > 0.0 {
                s.hermiticity = s.hermiticity.max((a - b).norm() / scale);
                s.cauchy_schwarz = s.cauchy_schwarz.max(a.norm() / scale - 1.0);
            } else if a.norm() > 0.0 || b.norm() > 0.0 {
                s.hermiticity = f64::INFINITY;
                s.cauchy_schwarz = f64::INFINITY;
            }
        }
    }
    Ok(s)
}

/// Largest relative difference between `samples` seeded random used
/// entries of the diagonal table and the classical rate density.
pub fn classical_residual(engine: &KernelEngine, diagonal: &KernelTable, samples: usize, seed: u64) -> Result<f64> {
    let grid = diagonal.grid();
    let vectors = diagonal.lattice().vectors();
    let mut rng = stream_rng(seed, 0);
    let mut worst: f64 = 0.0;
    let mut taken = 0;
    while taken < samples {
        let p = rng.random_range(0..grid.len());
        let q = rng.random_range(0..vectors.len());
        let (c, j) = (grid.cell(p), vectors[q]);
        // Entries whose source lies off the grid are never used and stored as zero.
        if !grid.contains([c[0] - j[0], c[1] - j[1], c[2] - j[2]]) {
            continue;
        }
        taken += 1;
        let exact = engine.m_in_cl(grid.node(p), grid.momentum(vectors[q]))?;
        let t = diagonal.value(p, q).re;
        if exact != 0.0 {
            worst = worst.max((t - exact).abs() / exact.abs());
        } else if t != 0.0 {
            worst = f64::INFINITY;
        }
    }
    Ok(worst)
}

/// Runs the acceptance suite on `base`.
pub fn verify(base: &RunConfig, only: &[String]) -> Result<VerifyReport> {
    Suite::new(base.clone()).run(only)
}

fn random_in_box(rng: &mut ChaCha8Rng, half: f64) -> Momentum {
    Momentum::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

fn random_direction(rng: &mut ChaCha8Rng) -> Momentum {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    Momentum::new(s * phi.cos(), s * phi.sin(), z)
}
